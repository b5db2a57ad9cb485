//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p floodmap-cli --test acceptance`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use floodmap_core::aggregate::{
    coarsen, compose_masks, overlay_impact, read_detections, read_impact, write_detections,
    write_impact, CoarsenRule, DatedMask, DetectionRecord, GridSpec, ImpactRow, Period,
};
use floodmap_core::classifier::{
    classify_rule, infer, BoundNet, ConvLayer, ConvNetSpec, Layer, RuleConfig, Tensor,
    INPUT_CHANNELS,
};
use floodmap_core::features::{
    compute_features, is_water_db, read_scene_manifest, write_scene_manifest, ManifestEntry,
    PassDirection, Polarization, Scene, SceneMeta, ScenePair, WATER_VH_DB, WATER_VV_DB,
};
use floodmap_core::geo::Polygon;
use floodmap_core::metrics::{
    compare_metrics, read_comparison_report, write_comparison_report, ComparisonRow,
    ConfusionCounts, Scores,
};
use floodmap_core::postproc::{
    buffer_mask, filter_false_positives, land_cover, majority_smooth, AuxStack, FilterConfig,
    Reason,
};
use floodmap_core::raster::PixelData;
use floodmap_core::synth::{generate_decade, generate_pair, DecadeModel, PixelRect, SynthScenario};
use floodmap_core::trend::{
    build_series, decompose_values, fit_trend, polarization_correction, read_decomposition,
    read_tile_trends, read_trend_report, write_decomposition, write_decomposition_rows,
    write_tile_rows, write_trend_report, write_trend_rows, MagnitudeClass, MonthRange,
    MonthlySeries, Observation, Scenario, TileTrendRow, YearMonth,
};
use floodmap_core::{GeoTransform, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

// Pinned tolerances and thresholds.
const NOISY_IOU_MIN: f64 = 0.90;
const NOISE_DB: f64 = 1.5;
const RUNTIME_LIMIT: Duration = Duration::from_secs(10);
const BOUNDARY_EPS_DB: f64 = 1e-6;
const CONV_MAX_ABS: f64 = 1e-5;
const IOU_F1_TOL: f64 = 1e-12;
const OLS_COVERAGE_MIN: usize = 190;
const OLS_NORMAL_EQ_TOL: f64 = 1e-8;
const OLS_INVARIANCE_TOL: f64 = 1e-10;
const CORRECTION_REL_TOL: f64 = 0.05;
const DECOMP_TREND_TOL: f64 = 0.5;
const HECTARES_PER_PIXEL_20M: f64 = 0.04;

type Check = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>, what: &str) -> Result<T, String> {
    r.map_err(|e| format!("{what}: {e}"))
}

fn grid() -> GeoTransform {
    GeoTransform::new(0.0, 0.0, 20.0, 20.0, 3857).unwrap()
}

fn planted_scenario(size: usize, sigma: f64, seed: u64) -> SynthScenario {
    let mut sc = SynthScenario {
        width: size,
        height: size,
        speckle_sigma: sigma,
        seed,
        ..Default::default()
    };
    let q = size / 8;
    sc.add_pixel_rect(PixelRect {
        col0: q,
        row0: q,
        col1: 3 * q,
        row1: 5 * q,
    })
    .unwrap();
    sc.add_pixel_rect(PixelRect {
        col0: 4 * q,
        row0: 2 * q,
        col1: 7 * q,
        row1: 3 * q,
    })
    .unwrap();
    let t = sc.transform;
    let corner = |c: f64, r: f64| {
        let (x, y) = t.pixel_to_world(c, r);
        floodmap_core::geo::to_lon_lat(t.crs_code, x, y).unwrap()
    };
    let s = size as f64;
    sc.flood_polygons.push(Polygon::new(vec![
        corner(0.55 * s, 0.6 * s),
        corner(0.9 * s, 0.55 * s),
        corner(0.8 * s, 0.95 * s),
        corner(0.6 * s, 0.85 * s),
    ]));
    sc
}

fn c1_end_to_end() -> Check {
    let p = ok(generate_pair(&planted_scenario(256, 0.0, 1)), "synth")?;
    let f = ok(compute_features(&p.pair), "features")?;
    let m = ok(classify_rule(&f, &RuleConfig::default()), "rule")?;
    let iou = ok(compare_metrics(&m.mask, &p.truth, None), "metrics")?.iou;
    ensure!(iou == 1.0, "noiseless IOU {iou} != 1");

    let mut worst: f64 = 1.0;
    for seed in 0..3 {
        let p = ok(
            generate_pair(&planted_scenario(256, NOISE_DB, seed)),
            "synth",
        )?;
        let f = ok(compute_features(&p.pair), "features")?;
        let m = ok(classify_rule(&f, &RuleConfig::default()), "rule")?;
        let s = ok(majority_smooth(&m.mask, 3), "smooth")?;
        worst = worst.min(ok(compare_metrics(&s, &p.truth, None), "metrics")?.iou);
    }
    ensure!(
        worst >= NOISY_IOU_MIN,
        "noisy IOU {worst:.4} < {NOISY_IOU_MIN}"
    );

    let big = ok(
        generate_pair(&planted_scenario(1024, NOISE_DB, 7)),
        "synth 1024",
    )?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let start = Instant::now();
    let smoothed = pool.install(|| -> Result<Raster, String> {
        let f = ok(compute_features(&big.pair), "features")?;
        let m = ok(classify_rule(&f, &RuleConfig::default()), "rule")?;
        ok(majority_smooth(&m.mask, 3), "smooth")
    })?;
    let elapsed = start.elapsed();
    let big_iou = ok(compare_metrics(&smoothed, &big.truth, None), "metrics")?.iou;
    ensure!(big_iou >= NOISY_IOU_MIN, "1024x1024 IOU {big_iou:.4}");
    ensure!(
        elapsed < RUNTIME_LIMIT,
        "1024x1024 single-threaded took {elapsed:?}"
    );
    Ok(format!(
        "noiseless IOU 1.0; noisy IOU min {worst:.4}; 1024x1024 in {:.2}s (IOU {big_iou:.4})",
        elapsed.as_secs_f64()
    ))
}

fn single_pixel_pair(pre: (f32, f32), post: (f32, f32)) -> Result<ScenePair, String> {
    let meta = |id: &str, day: u32| SceneMeta {
        scene_id: id.into(),
        acquisition_time: NaiveDate::from_ymd_opt(2021, 3, day)
            .unwrap()
            .and_hms_opt(6, 0, 0)
            .unwrap()
            .and_utc(),
        pass_direction: PassDirection::Ascending,
        relative_orbit: 7,
        polarizations: vec![Polarization::VV, Polarization::VH],
    };
    let r = |v: f32| Raster::from_f32(1, 1, grid(), Some(f32::NAN), vec![v]).unwrap();
    let a = ok(Scene::new(meta("a", 1), r(pre.0), Some(r(pre.1))), "pre")?;
    let b = ok(
        Scene::new(meta("b", 13), r(post.0), Some(r(post.1))),
        "post",
    )?;
    ok(ScenePair::new(a, b), "pair")
}

fn c2_threshold_semantics() -> Check {
    for (pol, t) in [
        (Polarization::VV, WATER_VV_DB),
        (Polarization::VH, WATER_VH_DB),
    ] {
        ensure!(
            !is_water_db(t, pol),
            "{pol:?}: exactly {t} dB counted as water"
        );
        ensure!(
            is_water_db(t - BOUNDARY_EPS_DB, pol),
            "{pol:?}: {t}-eps not water"
        );
        ensure!(
            !is_water_db(t + BOUNDARY_EPS_DB, pol),
            "{pol:?}: {t}+eps counted as water"
        );
    }
    // Same boundaries through the feature computation, at adjacent float32 values.
    let vv = WATER_VV_DB as f32;
    let vh = WATER_VH_DB as f32;
    let cases = [
        ((vv.next_down(), -11.0), (1u8, 0u8)),
        ((vv, -11.0), (0, 0)),
        ((vv.next_up(), -11.0), (0, 0)),
        ((-11.0, vh.next_down()), (0, 1)),
        ((-11.0, vh), (0, 0)),
        ((-11.0, vh.next_up()), (0, 0)),
    ];
    for ((post_vv, post_vh), (want_vv, want_vh)) in cases {
        let f = ok(
            compute_features(&single_pixel_pair((-11.0, -11.0), (post_vv, post_vh))?),
            "features",
        )?;
        let got = (
            f.change_to_water_vv.as_u8().unwrap()[0],
            f.change_to_water_vh.as_u8().unwrap()[0],
        );
        ensure!(
            got == (want_vv, want_vh),
            "post ({post_vv}, {post_vh}): change {got:?}, expected ({want_vv}, {want_vh})"
        );
    }
    // A pixel already water before the event is not a change.
    let f = ok(
        compute_features(&single_pixel_pair((vv.next_down(), -11.0), (-25.0, -11.0))?),
        "features",
    )?;
    ensure!(
        f.change_to_water_vv.as_u8().unwrap()[0] == 0,
        "pre-existing water flagged as change"
    );
    Ok(format!(
        "strict at {WATER_VV_DB} / {WATER_VH_DB} dB, eps {BOUNDARY_EPS_DB}"
    ))
}

type Volume = Vec<Vec<Vec<f64>>>;

fn direct_conv(x: &Volume, c: &ConvLayer, w: &[f32], b: &[f32]) -> Volume {
    let (h, wd) = (x[0].len() as isize, x[0][0].len() as isize);
    let (k, s, p) = (c.kernel as isize, c.stride as isize, c.padding as isize);
    let oh = (h + 2 * p - k) / s + 1;
    let ow = (wd + 2 * p - k) / s + 1;
    let mut out = vec![vec![vec![0.0; ow as usize]; oh as usize]; c.out_channels];
    for (o, plane) in out.iter_mut().enumerate() {
        let inputs: Vec<usize> = if c.depthwise {
            vec![o]
        } else {
            (0..c.in_channels).collect()
        };
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b[o] as f64;
                for (j, &ci) in inputs.iter().enumerate() {
                    for ky in 0..k {
                        for kx in 0..k {
                            let (iy, ix) = (oy * s + ky - p, ox * s + kx - p);
                            if iy >= 0 && ix >= 0 && iy < h && ix < wd {
                                let wi = ((o * inputs.len() + j) as isize * k * k + ky * k + kx)
                                    as usize;
                                acc += w[wi] as f64 * x[ci][iy as usize][ix as usize];
                            }
                        }
                    }
                }
                plane[oy as usize][ox as usize] = acc;
            }
        }
    }
    out
}

fn direct_forward(spec: &ConvNetSpec, values: &[f32], input: &Volume) -> Volume {
    let mut x = input.clone();
    let mut rest = values;
    for layer in &spec.layers {
        match layer {
            Layer::Conv(c) => {
                let (w, r) = rest.split_at(c.weight_count());
                let (b, r) = r.split_at(c.out_channels);
                rest = r;
                x = direct_conv(&x, c, w, b);
            }
            Layer::Relu => x
                .iter_mut()
                .flatten()
                .flatten()
                .for_each(|v| *v = v.max(0.0)),
            Layer::Sigmoid => x
                .iter_mut()
                .flatten()
                .flatten()
                .for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
        }
    }
    x
}

fn random_net(rng: &mut ChaCha8Rng, size_preserving: bool) -> BoundNet {
    let n_convs = rng.random_range(1..=3);
    let mut layers = Vec::new();
    let mut ch = INPUT_CHANNELS;
    for i in 0..n_convs {
        let last = i + 1 == n_convs;
        let kernel = [1, 3, 5][rng.random_range(0..3)];
        let depthwise = !last && rng.random_bool(0.3);
        let out = if last {
            1
        } else if depthwise {
            ch
        } else {
            rng.random_range(1..=6)
        };
        let (stride, padding) = if size_preserving {
            (1, kernel / 2)
        } else {
            (
                rng.random_range(1..=2),
                rng.random_range(0..=kernel / 2 + 1),
            )
        };
        layers.push(Layer::Conv(ConvLayer {
            in_channels: ch,
            out_channels: out,
            kernel,
            stride,
            padding,
            depthwise,
        }));
        layers.push(if last { Layer::Sigmoid } else { Layer::Relu });
        ch = out;
    }
    let spec = ConvNetSpec::new(layers).unwrap();
    let values: Vec<f32> = (0..spec.param_count())
        .map(|_| rng.random_range(-0.3..0.3))
        .collect();
    BoundNet::from_values(spec, &values).unwrap()
}

fn c3_conv_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let net = random_net(&mut rng, trial % 2 == 0);
        let (h, w) = loop {
            let (h, w) = (rng.random_range(6..=24), rng.random_range(6..=24));
            if net.spec().output_shape(h, w).is_some() {
                break (h, w);
            }
        };
        let data: Vec<f32> = (0..INPUT_CHANNELS * h * w)
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let volume: Volume = (0..INPUT_CHANNELS)
            .map(|c| {
                (0..h)
                    .map(|y| (0..w).map(|x| data[(c * h + y) * w + x] as f64).collect())
                    .collect()
            })
            .collect();
        let got = ok(
            net.forward(&ok(Tensor::from_vec(INPUT_CHANNELS, h, w, data), "tensor")?),
            "forward",
        )?;
        let want = direct_forward(net.spec(), &net.values(), &volume);
        ensure!(
            (got.height, got.width) == (want[0].len(), want[0][0].len()),
            "trial {trial}: shape mismatch"
        );
        for y in 0..got.height {
            for x in 0..got.width {
                worst = worst.max((got.at(0, y, x) as f64 - want[0][y][x]).abs());
            }
        }
    }
    ensure!(
        worst <= CONV_MAX_ABS,
        "max abs deviation {worst:e} > {CONV_MAX_ABS:e}"
    );

    for _ in 0..5 {
        let net = random_net(&mut rng, true);
        let p = ok(
            generate_pair(&planted_scenario(64, 1.0, rng.random())),
            "synth",
        )?;
        let f = ok(compute_features(&p.pair), "features")?;
        let whole = ok(infer(&net, &f, 0.5, 64), "infer")?;
        for tile in [32, 17, 5] {
            let tiled = ok(infer(&net, &f, 0.5, tile), "infer")?;
            ensure!(
                tiled.probability.as_ref().unwrap().to_bytes()
                    == whole.probability.as_ref().unwrap().to_bytes(),
                "tile {tile}: probabilities differ from untiled"
            );
        }
    }
    Ok(format!(
        "50 triples, max abs {worst:.2e}; tiles 32/17/5 bit-exact"
    ))
}

fn single_pixel(size: usize) -> Raster {
    let mut v = vec![0u8; size * size];
    v[(size / 2) * size + size / 2] = 1;
    Raster::binary(size, size, grid(), v).unwrap()
}

fn c4_morphology() -> Check {
    let r4 = ok(buffer_mask(&single_pixel(41), 4), "buffer")?.count_value(1.0);
    let r12 = ok(buffer_mask(&single_pixel(41), 12), "buffer")?.count_value(1.0);
    ensure!(r4 == 81, "radius 4 gave {r4}");
    ensure!(r12 == 625, "radius 12 gave {r12}");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..20 {
        let (w, h) = (rng.random_range(5..50), rng.random_range(5..50));
        let v: Vec<u8> = (0..w * h).map(|_| rng.random_bool(0.04) as u8).collect();
        let m = Raster::binary(w, h, grid(), v).unwrap();
        let (a, b) = (rng.random_range(0..6), rng.random_range(0..6));
        let two = ok(buffer_mask(&ok(buffer_mask(&m, a), "buffer")?, b), "buffer")?;
        let one = ok(buffer_mask(&m, a + b), "buffer")?;
        ensure!(
            two == one,
            "mask {k}: dilate({a}) then dilate({b}) != dilate({})",
            a + b
        );
    }
    Ok("81 / 625 positives; composition law on 20 masks".into())
}

fn c5_filter_rules() -> Check {
    let ten = 10.0f32;
    // (slope, land cover, soil moisture, temperature, expected reason)
    let cases: [(f32, u8, f32, f32, Reason); 6] = [
        (
            ten.next_up(),
            land_cover::CROPLAND,
            0.3,
            290.0,
            Reason::STEEP_TERRAIN,
        ),
        (
            ten.next_down(),
            land_cover::CROPLAND,
            0.3,
            290.0,
            Reason::empty(),
        ),
        (
            2.0,
            land_cover::BARE_GROUND,
            0.3,
            290.0,
            Reason::BARE_GROUND,
        ),
        (
            2.0,
            land_cover::PERMANENT_WATER,
            0.3,
            290.0,
            Reason::PERMANENT_WATER,
        ),
        (
            2.0,
            land_cover::GRASSLAND,
            0.05,
            270.0,
            Reason::LOW_SOIL_MOISTURE | Reason::LOW_TEMPERATURE,
        ),
        (
            15.0,
            land_cover::BARE_GROUND,
            0.3,
            290.0,
            Reason::STEEP_TERRAIN | Reason::BARE_GROUND,
        ),
    ];
    let n = cases.len();
    let f32s = |pick: fn(&(f32, u8, f32, f32, Reason)) -> f32| {
        Raster::from_f32(
            n,
            1,
            grid(),
            Some(f32::NAN),
            cases.iter().map(pick).collect(),
        )
        .unwrap()
    };
    let aux = AuxStack {
        slope: Some(f32s(|c| c.0)),
        land_cover: Some(
            Raster::from_u8(n, 1, grid(), Some(0), cases.iter().map(|c| c.1).collect()).unwrap(),
        ),
        soil_moisture: Some(f32s(|c| c.2)),
        temperature: Some(f32s(|c| c.3)),
        elevation: None,
    };
    let cand = floodmap_core::classifier::FloodCandidateMask::from_mask(
        Raster::binary(n, 1, grid(), vec![1; n]).unwrap(),
    );
    let (kept, reason) = ok(
        filter_false_positives(&cand, &aux, &FilterConfig::default()),
        "filter",
    )?;
    let (k, r) = (kept.mask.as_u8().unwrap(), reason.as_u8().unwrap());
    for (i, c) in cases.iter().enumerate() {
        ensure!(
            r[i] == c.4.bits(),
            "case {i}: reason {:#04x}, expected {:#04x}",
            r[i],
            c.4.bits()
        );
        ensure!(k[i] == c.4.is_empty() as u8, "case {i}: kept = {}", k[i]);
    }
    Ok("6-case grid: reasons exact, only slope 10-eps retained".into())
}

fn c6_metrics_algebra() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let c = ConfusionCounts {
            tp: rng.random_range(0..5000),
            fp: rng.random_range(0..5000),
            fn_: rng.random_range(0..5000),
            tn: rng.random_range(0..5000),
        };
        let s = Scores::from_counts(&c);
        if s.f1 < 2.0 {
            worst = worst.max((s.iou - s.f1 / (2.0 - s.f1)).abs());
        }
    }
    ensure!(
        worst <= IOU_F1_TOL,
        "iou vs f1/(2-f1) deviates by {worst:e}"
    );
    let s = Scores::from_counts(&ConfusionCounts {
        tp: 50,
        fp: 50,
        fn_: 50,
        tn: 0,
    });
    let want = (0.5, 0.5, 0.5, 1.0 / 3.0);
    let got = (s.precision, s.recall, s.f1, s.iou);
    ensure!(
        (got.0 - want.0).abs() <= IOU_F1_TOL
            && (got.1 - want.1).abs() <= IOU_F1_TOL
            && (got.2 - want.2).abs() <= IOU_F1_TOL
            && (got.3 - want.3).abs() <= IOU_F1_TOL,
        "tp=fp=fn=50 gave {got:?}"
    );
    Ok(format!(
        "100 tables, max |iou - f1/(2-f1)| {worst:.1e}; (50,50,50) -> (0.5, 0.5, 0.5, 1/3)"
    ))
}

fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * yi;
        }
    }
    for col in 0..p {
        let piv = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in col + 1..p {
            let f = a[r][col] / a[col][col];
            for c in col..=p {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| a[i][j] * beta[j]).sum();
        beta[i] = (a[i][p] - s) / a[i][i];
    }
    beta
}

fn planted_series(seed: u64, slope: f64, sigma: f64) -> MonthlySeries {
    let start = YearMonth::new(2014, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let v: Vec<f64> = (0..120)
        .map(|t| {
            let m = start.offset(t).month as f64;
            200.0
                + slope * t as f64
                + 15.0 * (2.0 * PI * (m - 1.0) / 12.0).sin()
                + noise.sample(&mut rng)
        })
        .collect();
    MonthlySeries::from_values(start, &v)
}

fn c7_ols() -> Check {
    let mut covered = 0;
    for seed in 0..200 {
        let fit = ok(
            fit_trend(&planted_series(seed, 0.5, 3.0), Scenario::All),
            "fit",
        )?;
        covered += ((fit.slope - 0.5).abs() <= 2.0 * fit.slope_stderr) as usize;
    }
    ensure!(
        covered >= OLS_COVERAGE_MIN,
        "covered {covered}/200 < {OLS_COVERAGE_MIN}"
    );

    let mut worst = 0.0f64;
    for seed in 0..10 {
        let s = planted_series(1000 + seed, 0.5, 3.0);
        let fit = ok(fit_trend(&s, Scenario::All), "fit")?;
        let origin = s.months[0].index();
        let x: Vec<Vec<f64>> = s
            .months
            .iter()
            .map(|m| {
                let mut row = vec![0.0; 13];
                row[0] = 1.0;
                row[1] = (m.index() - origin) as f64;
                if m.month > 1 {
                    row[m.month as usize] = 1.0;
                }
                row
            })
            .collect();
        let y: Vec<f64> = s.normalized.iter().map(|v| v.unwrap()).collect();
        let beta = normal_equations(&x, &y);
        for (a, b) in fit.coefficients().iter().zip(&beta) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure!(
        worst <= OLS_NORMAL_EQ_TOL,
        "normal equations differ by {worst:e}"
    );

    let base = planted_series(77, 0.5, 3.0);
    let fit = ok(fit_trend(&base, Scenario::All), "fit")?;
    let shifted: Vec<f64> = base
        .normalized
        .iter()
        .map(|v| v.unwrap() + 1234.5)
        .collect();
    let sfit = ok(
        fit_trend(
            &MonthlySeries::from_values(base.months[0], &shifted),
            Scenario::All,
        ),
        "fit",
    )?;
    ensure!(
        (sfit.slope - fit.slope).abs() <= OLS_INVARIANCE_TOL,
        "shift changed slope by {:e}",
        sfit.slope - fit.slope
    );
    ensure!(
        (sfit.intercept - fit.intercept - 1234.5).abs() <= OLS_INVARIANCE_TOL * 1e3,
        "shift moved intercept by {}",
        sfit.intercept - fit.intercept
    );
    let scaled: Vec<f64> = base.normalized.iter().map(|v| v.unwrap() * 3.0).collect();
    let kfit = ok(
        fit_trend(
            &MonthlySeries::from_values(base.months[0], &scaled),
            Scenario::All,
        ),
        "fit",
    )?;
    ensure!(
        (kfit.slope - 3.0 * fit.slope).abs() <= OLS_INVARIANCE_TOL,
        "scale: slope {} vs {}",
        kfit.slope,
        3.0 * fit.slope
    );
    ensure!(
        (kfit.p_value - fit.p_value).abs() <= OLS_INVARIANCE_TOL,
        "scale changed p"
    );
    Ok(format!(
        "coverage {covered}/200; normal equations max diff {worst:.1e}; shift/scale invariant"
    ))
}

fn decade_detect(
    sc: &SynthScenario,
    model: &DecadeModel,
) -> Result<(Vec<DetectionRecord>, Vec<Observation>), String> {
    let decade = ok(generate_decade(sc, model), "decade")?;
    let mut records = Vec::new();
    let mut obs = Vec::new();
    for m in &decade.months {
        let f = ok(compute_features(&m.pair), "features")?;
        let cand = ok(classify_rule(&f, &RuleConfig::default()), "rule")?;
        let none = Raster::filled_u8(
            cand.mask.width(),
            cand.mask.height(),
            *cand.mask.transform(),
            None,
            0,
        );
        let meta = &m.pair.post.meta;
        records.extend(ok(
            floodmap_core::aggregate::emit_records(&cand, &none, &f, &AuxStack::default(), meta),
            "records",
        )?);
        obs.push(Observation {
            date: meta.acquisition_time.date_naive(),
            scene_id: meta.scene_id.clone(),
            dual_pol: m.pair.is_dual_pol(),
            footprint: None,
        });
    }
    Ok((records, obs))
}

fn c8_scenarios() -> Check {
    let sc = SynthScenario {
        width: 64,
        height: 64,
        speckle_sigma: 1.0,
        seed: 11,
        ..Default::default()
    };
    let (records, obs) = decade_detect(&sc, &DecadeModel::default())?;
    let series = ok(
        build_series(&records, &obs, HECTARES_PER_PIXEL_20M, None),
        "series",
    )?;
    let est = Scenario::ALL
        .iter()
        .map(|&s| fit_trend(&series, s).map(|f| f.annual_pct))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    ensure!(
        est[0] >= est[1] && est[1] >= est[2],
        "ordering violated: {est:?}"
    );

    let flat = DecadeModel {
        trend_pct_per_year: 0.0,
        seasonal_amplitude: 0.0,
        outlier_year: None,
        mean_flood_px: 600.0,
        ..Default::default()
    };
    let sc = SynthScenario {
        width: 48,
        height: 48,
        speckle_sigma: 1.0,
        seed: 3,
        ..Default::default()
    };
    let (records, obs) = decade_detect(&sc, &flat)?;
    let series = ok(
        build_series(&records, &obs, HECTARES_PER_PIXEL_20M, None),
        "series",
    )?;
    let window = MonthRange::new(YearMonth::new(2016, 6), YearMonth::new(2018, 5)).unwrap();
    let factor = ok(polarization_correction(&series, window), "correction")?
        .correction_factor
        .unwrap_or(1.0);
    ensure!(
        (factor - 2.0).abs() / 2.0 <= CORRECTION_REL_TOL,
        "correction factor {factor} not within 5% of 2"
    );
    Ok(format!(
        "annual % all {:.2} >= drop_2022 {:.2} >= drop both {:.2}; factor {factor:.4}",
        est[0], est[1], est[2]
    ))
}

fn c9_decomposition() -> Check {
    let start = YearMonth::new(2015, 1);
    let n = 120;
    let y: Vec<Option<f64>> = (0..n)
        .map(|t| Some(100.0 + 2.0 * t as f64 + 10.0 * (2.0 * PI * t as f64 / 12.0).sin()))
        .collect();
    let d = ok(decompose_values(start, &y, 12), "decompose")?;
    let mut worst = 0.0f64;
    for t in 12..n - 12 {
        let tr = d.trend[t].ok_or(format!("trend undefined at {t}"))?;
        worst = worst.max((tr - (100.0 + 2.0 * t as f64)).abs());
    }
    ensure!(worst < DECOMP_TREND_TOL, "mid-series trend error {worst}");
    for w in d.seasonal.windows(12) {
        let s: f64 = w.iter().sum();
        ensure!(s == 0.0, "seasonal window sums to {s:e}");
    }
    for t in 0..n {
        if let (Some(tr), Some(r)) = (d.trend[t], d.residual[t]) {
            ensure!(
                (tr + d.seasonal[t]) + r == d.observed[t],
                "reconstruction inexact at {t}"
            );
        }
    }
    Ok(format!(
        "mid-series trend error {worst:.2e}; seasonal windows sum to 0; reconstruction exact"
    ))
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> Raster {
    let v = (0..w * h)
        .map(|_| {
            if rng.random_bool(0.02) {
                255
            } else {
                rng.random_bool(p) as u8
            }
        })
        .collect();
    Raster::binary(w, h, grid(), v).unwrap()
}

fn c10_aggregation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (w, h) = (40, 30);
    let target = GridSpec {
        transform: grid(),
        width: w,
        height: h,
    };
    let day = |d: u32| NaiveDate::from_ymd_opt(2022, 5, d).unwrap();
    let period = Period {
        start: day(1),
        end: day(31),
    };
    for trial in 0..20 {
        let k = rng.random_range(1..6);
        let masks: Vec<DatedMask> = (0..k)
            .map(|i| DatedMask {
                date: day(1 + i as u32 * 5),
                mask: random_mask(&mut rng, w, h, 0.05),
            })
            .collect();
        let radius = rng.random_range(0..3);
        let compose = |m: &[DatedMask]| compose_masks(m, target, period, radius).map(|c| c.extent);
        let base = ok(compose(&masks), "compose")?;
        let mut rev = masks.clone();
        rev.reverse();
        ensure!(
            ok(compose(&rev), "compose")? == base,
            "trial {trial}: not commutative"
        );
        let mut doubled = masks.clone();
        doubled.extend(masks.iter().cloned());
        ensure!(
            ok(compose(&doubled), "compose")? == base,
            "trial {trial}: not idempotent"
        );
        let mut more = masks.clone();
        more.push(DatedMask {
            date: day(30),
            mask: random_mask(&mut rng, w, h, 0.05),
        });
        let bigger = ok(compose(&more), "compose")?;
        let (b, g) = (base.as_u8().unwrap(), bigger.as_u8().unwrap());
        ensure!(
            b.iter().zip(g).all(|(x, y)| *x != 1 || *y == 1),
            "trial {trial}: not monotone"
        );
        let c = ok(compose_masks(&masks, target, period, radius), "compose")?;
        let ha = ok(c.hectares(), "hectares")?;
        ensure!(
            ha == c.positives() as f64 * HECTARES_PER_PIXEL_20M,
            "hectares {ha} for {} px",
            c.positives()
        );
    }
    for _ in 0..50 {
        let (w, h) = (rng.random_range(1..60), rng.random_range(1..60));
        let mut v = vec![0u8; w * h];
        v[rng.random_range(0..w * h)] = 1;
        let fine = ok(
            compose_masks(
                &[DatedMask {
                    date: day(2),
                    mask: Raster::binary(w, h, grid(), v).unwrap(),
                }],
                GridSpec {
                    transform: grid(),
                    width: w,
                    height: h,
                },
                period,
                0,
            ),
            "compose",
        )?;
        let cell = [50.0, 100.0, 250.0][rng.random_range(0..3)];
        let coarse = ok(coarsen(&fine, cell, CoarsenRule::AnyTouch), "coarsen")?;
        ensure!(
            coarse.positives() == 1,
            "one fine pixel mapped to {} coarse cells",
            coarse.positives()
        );
    }
    let n = 1234;
    let mut v = vec![0u8; 100 * 100];
    v[..n].fill(1);
    let exact = ok(
        compose_masks(
            &[DatedMask {
                date: day(3),
                mask: Raster::binary(100, 100, grid(), v).unwrap(),
            }],
            GridSpec {
                transform: grid(),
                width: 100,
                height: 100,
            },
            period,
            0,
        ),
        "compose",
    )?;
    ensure!(
        ok(exact.hectares(), "hectares")? == n as f64 * HECTARES_PER_PIXEL_20M,
        "hectare accounting"
    );
    Ok("20 randomized scene sets; any-touch 50/50; N x 0.04 ha exact".into())
}

fn random_raster(rng: &mut ChaCha8Rng) -> Raster {
    let (w, h) = (rng.random_range(1..20), rng.random_range(1..20));
    let t = GeoTransform::new(
        rng.random_range(-1e6..1e6),
        rng.random_range(-1e6..1e6),
        rng.random_range(0.5..500.0),
        rng.random_range(0.5..500.0),
        [4326, 3857, 32633][rng.random_range(0..3)],
    )
    .unwrap();
    let n = w * h;
    let with_nodata = rng.random_bool(0.5);
    match rng.random_range(0..3) {
        0 => {
            let nd = with_nodata.then_some(255.0);
            Raster::new(
                w,
                h,
                t,
                nd,
                PixelData::Byte((0..n).map(|_| rng.random()).collect()),
            )
            .unwrap()
        }
        1 => {
            let nd = with_nodata.then_some(-9999.0);
            Raster::new(
                w,
                h,
                t,
                nd,
                PixelData::Int16((0..n).map(|_| rng.random()).collect()),
            )
            .unwrap()
        }
        _ => {
            let nd = with_nodata.then_some(f64::NAN);
            let v = (0..n)
                .map(|_| {
                    if with_nodata && rng.random_bool(0.1) {
                        f32::NAN
                    } else {
                        rng.random_range(-1e4..1e4)
                    }
                })
                .collect();
            Raster::new(w, h, t, nd, PixelData::Float32(v)).unwrap()
        }
    }
}

fn opt(rng: &mut ChaCha8Rng) -> Option<f64> {
    rng.random_bool(0.7).then(|| rng.random_range(-1e3..1e3))
}

fn csv_round_trips(rng: &mut ChaCha8Rng) -> Result<(), String> {
    fn check<T>(
        name: &str,
        rows: &[T],
        write: impl Fn(&mut Vec<u8>, &[T]) -> floodmap_core::Result<()>,
        read: impl Fn(&[u8]) -> floodmap_core::Result<Vec<T>>,
    ) -> Result<(), String> {
        let mut a = Vec::new();
        ok(write(&mut a, rows), name)?;
        let back = ok(read(&a), name)?;
        let mut b = Vec::new();
        ok(write(&mut b, &back), name)?;
        ensure!(a == b, "{name}: re-serialization differs");
        Ok(())
    }
    let day = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
    let dets: Vec<DetectionRecord> = (0..rng.random_range(0..30))
        .map(|i| DetectionRecord {
            lon: rng.random_range(-180.0..180.0),
            lat: rng.random_range(-90.0..90.0),
            date: day + chrono::Days::new(rng.random_range(0..3000)),
            scene_id: format!("S1_{i}"),
            delta_vv: opt(rng),
            delta_vh: opt(rng),
            soil_moisture: rng.random_bool(0.7).then(|| rng.random_range(0.0..1.0)),
            elevation: opt(rng),
            slope: rng.random_bool(0.7).then(|| rng.random_range(0.0..60.0)),
            temperature: rng.random_bool(0.7).then(|| rng.random_range(250.0..320.0)),
            land_cover: rng.random_bool(0.7).then_some(land_cover::CROPLAND),
            filtered: i % 3 == 0,
            removal_reason: if i % 3 == 0 {
                Reason::STEEP_TERRAIN.bits()
            } else {
                0
            },
        })
        .collect();
    check(
        "detections",
        &dets,
        |w, r| write_detections(w, r),
        |b| read_detections(b),
    )?;

    let cmp: Vec<ComparisonRow> = (0..rng.random_range(0..8))
        .map(|i| ComparisonRow {
            region_id: format!("r{i}"),
            new_area_pct: rng.random_range(0.0..500.0),
            rate_gsw: rng.random_bool(0.5).then(|| rng.random()),
            rate_gsw_unmasked: rng.random_bool(0.5).then(|| rng.random()),
            rate_modis: rng.random_bool(0.5).then(|| rng.random()),
            rate_modis_unmasked: rng.random_bool(0.5).then(|| rng.random()),
        })
        .collect();
    check(
        "comparison",
        &cmp,
        |w, r| write_comparison_report(w, r),
        |b| read_comparison_report(b),
    )?;

    let imp: Vec<ImpactRow> = (0..rng.random_range(0..8))
        .map(|i| {
            let class_px = rng.random_range(1..100_000u64);
            let flooded_px = rng.random_range(0..=class_px);
            ImpactRow {
                zone_id: format!("z{i}"),
                class: land_cover::CROPLAND,
                class_px,
                flooded_px,
                fraction: flooded_px as f64 / class_px as f64,
                hectares: flooded_px as f64 * HECTARES_PER_PIXEL_20M,
            }
        })
        .collect();
    check(
        "impact",
        &imp,
        |w, r| write_impact(w, r),
        |b| read_impact(b),
    )?;

    let scenes: Vec<ManifestEntry> = (0..rng.random_range(0..8))
        .map(|i| ManifestEntry {
            scene_id: format!("S1A_{i}"),
            acquisition_time: chrono::DateTime::from_timestamp(
                rng.random_range(1_400_000_000..1_800_000_000),
                0,
            )
            .unwrap(),
            pass_direction: if rng.random_bool(0.5) {
                PassDirection::Ascending
            } else {
                PassDirection::Descending
            },
            relative_orbit: rng.random_range(1..176),
            vv_path: format!("s{i}_vv.flr"),
            vh_path: rng.random_bool(0.5).then(|| format!("s{i}_vh.flr")),
        })
        .collect();
    check(
        "scene manifest",
        &scenes,
        |w, r| write_scene_manifest(w, r),
        |b| read_scene_manifest(b),
    )?;

    let fits: Vec<_> = Scenario::ALL
        .iter()
        .map(|&s| fit_trend(&planted_series(rng.random(), 0.5, 3.0), s))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    ok(write_trend_report(&mut buf, &fits), "trend report")?;
    let rows = ok(read_trend_report(&buf[..]), "trend report")?;
    check(
        "trend report",
        &rows,
        |w, r| write_trend_rows(w, r),
        |b| read_trend_report(b),
    )?;

    let tiles: Vec<TileTrendRow> = (0..rng.random_range(0..8))
        .map(|i| TileTrendRow {
            tile_lon: -180.0 + 3.0 * i as f64,
            tile_lat: 3.0 * rng.random_range(-30..30) as f64,
            slope: opt(rng),
            p_value: rng.random_bool(0.8).then(|| rng.random()),
            class: [
                MagnitudeClass::LargeIncrease,
                MagnitudeClass::ModerateDecrease,
                MagnitudeClass::Filtered,
            ][i % 3],
        })
        .collect();
    check(
        "tile trends",
        &tiles,
        |w, r| write_tile_rows(w, r),
        |b| read_tile_trends(b),
    )?;

    let y: Vec<Option<f64>> = (0..48)
        .map(|_| rng.random_bool(0.9).then(|| rng.random_range(0.0..100.0)))
        .collect();
    let d = ok(
        decompose_values(YearMonth::new(2018, 4), &y, 12),
        "decompose",
    )?;
    let mut buf = Vec::new();
    ok(write_decomposition(&mut buf, &d), "decomposition")?;
    let rows = ok(read_decomposition(&buf[..]), "decomposition")?;
    check(
        "decomposition",
        &rows,
        |w, r| write_decomposition_rows(w, r),
        |b| read_decomposition(b),
    )?;
    Ok(())
}

fn digests(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = fs::read(&p).unwrap();
        if name.ends_with(".manifest.txt") {
            let text = String::from_utf8(bytes).unwrap();
            let kept: Vec<&str> = text
                .lines()
                .filter(|l| !l.starts_with("started_at=") && !l.starts_with("wall_time_s="))
                .collect();
            bytes = kept.join("\n").into_bytes();
        }
        out.insert(name, bytes);
    }
    out
}

fn cli_run(cwd: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_floodmap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| format!("spawning floodmap: {e}"))?;
    ensure!(
        out.status.success(),
        "floodmap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

fn cli_pipeline(cwd: &Path) -> Result<(), String> {
    fs::write(
        cwd.join("scenario.txt"),
        "grid.width = 48\ngrid.height = 48\nspeckle_sigma = 1\nflood.pixel_rect = 4 4 30 20\ndecade.months = 60\n",
    )
    .map_err(|e| e.to_string())?;
    cli_run(
        cwd,
        &[
            "--seed",
            "21",
            "--jobs",
            "2",
            "--out",
            "syn",
            "synth",
            "--scenario",
            "scenario.txt",
            "--decade",
        ],
    )?;
    cli_run(
        cwd,
        &[
            "--jobs",
            "2",
            "--out",
            "det",
            "detect",
            "--manifest",
            "syn/manifest.csv",
            "--smooth",
            "3",
        ],
    )?;
    cli_run(
        cwd,
        &[
            "--out",
            "agg",
            "aggregate",
            "--detections",
            "det/detections.csv",
            "--grid",
            "syn/truth_2015-01.flr",
            "--coarse-m",
            "100",
        ],
    )?;
    cli_run(
        cwd,
        &[
            "--out",
            "trend",
            "trend",
            "--detections",
            "det/detections.csv",
            "--manifest",
            "syn/manifest.csv",
            "--tiles",
        ],
    )
}

fn c11_formats() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..200 {
        let r = random_raster(&mut rng);
        let bytes = r.to_bytes();
        let back = ok(Raster::from_bytes(&bytes), "decode")?;
        ensure!(
            back.to_bytes() == bytes,
            "raster {i}: FLR1 re-encoding differs"
        );
    }
    for _ in 0..20 {
        csv_round_trips(&mut rng)?;
    }

    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    let mut runs = Vec::new();
    for dir in [&a, &b] {
        fs::create_dir_all(dir).unwrap();
        cli_pipeline(dir)?;
        let mut all = BTreeMap::new();
        for stage in ["syn", "det", "agg", "trend"] {
            for (k, v) in digests(&dir.join(stage)) {
                all.insert(format!("{stage}/{k}"), v);
            }
        }
        runs.push(all);
    }
    ensure!(runs[0].len() > 20, "only {} files produced", runs[0].len());
    ensure!(
        runs[0].keys().eq(runs[1].keys()),
        "runs produced different file sets"
    );
    for (k, v) in &runs[0] {
        ensure!(runs[1][k] == *v, "{k} differs between identical runs");
    }
    Ok(format!("200 FLR1 rasters, 8 CSV schemas x 20 fixtures byte-exact; {} CLI outputs identical across runs", runs[0].len()))
}

fn c12_overlay() -> Check {
    let (w, h) = (20, 20);
    let mut lc = vec![land_cover::GRASSLAND; w * h];
    lc[..100].fill(land_cover::CROPLAND);
    let lc = Raster::from_u8(w, h, grid(), Some(0), lc).unwrap();
    // An 18-pixel line on row 5 buffered by one pixel reaches 19 cropland pixels on row 4.
    let mut seed = vec![0u8; w * h];
    seed[5 * w..5 * w + 18].fill(1);
    let extent = ok(
        buffer_mask(&Raster::binary(w, h, grid(), seed).unwrap(), 1),
        "buffer",
    )?;
    let rows = ok(
        overlay_impact(&extent, &lc, land_cover::CROPLAND, None),
        "overlay",
    )?;
    ensure!(rows.len() == 1, "{} rows", rows.len());
    let r = &rows[0];
    ensure!(
        r.class_px == 100 && r.flooded_px == 19,
        "class_px {} flooded_px {}",
        r.class_px,
        r.flooded_px
    );
    let pct = 100.0 * r.fraction;
    ensure!(pct == 19.0, "impact {pct}%");
    ensure!(
        (r.hectares - 19.0 * HECTARES_PER_PIXEL_20M).abs() < 1e-12,
        "hectares {}",
        r.hectares
    );
    Ok("19 of 100 cropland pixels -> 19.0%".into())
}

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "end-to-end synthetic recovery", c1_end_to_end),
        (2, "threshold semantics", c2_threshold_semantics),
        (3, "convolution-engine oracle", c3_conv_oracle),
        (4, "morphology", c4_morphology),
        (5, "filter rules", c5_filter_rules),
        (6, "metrics algebra", c6_metrics_algebra),
        (7, "OLS trend", c7_ols),
        (8, "scenario machinery", c8_scenarios),
        (9, "decomposition", c9_decomposition),
        (10, "aggregation laws", c10_aggregation),
        (11, "formats and CLI determinism", c11_formats),
        (12, "overlay statistic", c12_overlay),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  criterion {n:>2} ({name}): {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {n:>2} ({name}): {detail} [{secs:.1}s]");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
