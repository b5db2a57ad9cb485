//! Forward-only convolution engine for early-fusion change-detection heads.
//!
//! Supported layers: standard and depthwise 2-D cross-correlation with zero
//! padding and integer stride, ReLU, and sigmoid. Batch-norm must be folded
//! into the convolution weights by the exporter.
//!
//! Evaluation works on rectangular regions of the output grid. For a region,
//! the engine walks the layer stack backwards to find the input window it
//! depends on, then computes every intermediate activation only over the
//! window it needs, treating positions outside a layer's true extent as the
//! zero padding. Each output value is therefore produced by the same
//! arithmetic in the same order whatever the tiling, so tiled and untiled
//! inference agree bit for bit.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::features::FeatureStack;
use crate::raster::{tile_grid, PixelData, Raster, BINARY_NODATA};
use crate::{Error, Result};

use super::FloodCandidateMask;

/// Channels of the early-fusion input: change VV, change VH, delta VV, delta VH.
pub const INPUT_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub depthwise: bool,
}

impl ConvLayer {
    pub fn weight_count(&self) -> usize {
        let per_out = if self.depthwise { 1 } else { self.in_channels };
        self.out_channels * per_out * self.kernel * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_channels
    }

    /// Output length along one axis, or `None` if the layer does not fit.
    pub fn output_len(&self, input: usize) -> Option<usize> {
        let padded = input + 2 * self.padding;
        (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv(ConvLayer),
    Relu,
    Sigmoid,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layer::Conv(c) => write!(
                f,
                "conv {} {} {} {} {} depthwise={}",
                c.in_channels, c.out_channels, c.kernel, c.stride, c.padding, c.depthwise
            ),
            Layer::Relu => f.write_str("relu"),
            Layer::Sigmoid => f.write_str("sigmoid"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvNetSpec {
    pub layers: Vec<Layer>,
}

impl ConvNetSpec {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let s = Self { layers };
        s.validate()?;
        Ok(s)
    }

    /// Parses the line-oriented spec format, e.g.
    ///
    /// ```text
    /// conv 4 8 3 1 1 depthwise=false
    /// relu
    /// conv 8 1 1 1 0
    /// sigmoid
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut layers = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::NetSpec {
                line: idx + 1,
                message,
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            let layer = match toks[0] {
                "relu" if toks.len() == 1 => Layer::Relu,
                "sigmoid" if toks.len() == 1 => Layer::Sigmoid,
                "conv" if toks.len() == 6 || toks.len() == 7 => {
                    let num = |i: usize, name: &str| {
                        toks[i]
                            .parse::<usize>()
                            .map_err(|e| err(format!("{name}: {e}")))
                    };
                    let depthwise = match toks.get(6) {
                        None | Some(&"depthwise=false") => false,
                        Some(&"depthwise=true") => true,
                        Some(other) => return Err(err(format!("unexpected token {other:?}"))),
                    };
                    Layer::Conv(ConvLayer {
                        in_channels: num(1, "in_channels")?,
                        out_channels: num(2, "out_channels")?,
                        kernel: num(3, "kernel")?,
                        stride: num(4, "stride")?,
                        padding: num(5, "padding")?,
                        depthwise,
                    })
                }
                _ => return Err(err(format!("cannot parse layer {line:?}"))),
            };
            layers.push(layer);
        }
        Self::new(layers)
    }

    pub fn to_text(&self) -> String {
        self.layers.iter().map(|l| format!("{l}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidNetwork(m));
        if self.layers.is_empty() {
            return bad("empty layer list (no sigmoid head)".into());
        }
        let mut channels = INPUT_CHANNELS;
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::Conv(c) = layer {
                if c.in_channels != channels {
                    return bad(format!(
                        "layer {i}: expects {} input channels, previous layer yields {channels}",
                        c.in_channels
                    ));
                }
                if c.kernel == 0 || c.kernel % 2 == 0 {
                    return bad(format!("layer {i}: kernel must be odd, got {}", c.kernel));
                }
                if c.stride == 0 || c.out_channels == 0 {
                    return bad(format!("layer {i}: stride and out_channels must be >= 1"));
                }
                if c.depthwise && c.in_channels != c.out_channels {
                    return bad(format!(
                        "layer {i}: depthwise conv needs in_channels == out_channels"
                    ));
                }
                channels = c.out_channels;
            }
        }
        if self.layers.last() != Some(&Layer::Sigmoid) {
            return bad("final layer must be sigmoid".into());
        }
        if channels != 1 {
            return bad(format!(
                "network must end with 1 channel, ends with {channels}"
            ));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.convs().map(ConvLayer::param_count).sum()
    }

    fn convs(&self) -> impl Iterator<Item = &ConvLayer> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Conv(c) => Some(c),
            _ => None,
        })
    }

    /// Spatial output size for an `h` x `w` input.
    pub fn output_shape(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        self.convs().try_fold((h, w), |(h, w), c| {
            Some((c.output_len(h)?, c.output_len(w)?))
        })
    }
}

/// Dense CHW float tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::InvalidArgument(format!(
                "tensor data has {} values, expected {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Features as the 4-channel early-fusion input; nodata becomes 0.
    pub fn from_features(f: &FeatureStack) -> Result<Self> {
        f.check_consistent()?;
        let (w, h) = (f.width(), f.height());
        let mut t = Tensor::zeros(INPUT_CHANNELS, h, w);
        let planes = [
            &f.change_to_water_vv,
            &f.change_to_water_vh,
            &f.delta_vv,
            &f.delta_vh,
        ];
        for (c, plane) in planes.iter().enumerate() {
            let dst = &mut t.data[c * h * w..(c + 1) * h * w];
            for (i, d) in dst.iter_mut().enumerate() {
                *d = plane.value(i).map_or(0.0, |v| v as f32);
            }
        }
        Ok(t)
    }
}

/// A network spec with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundNet {
    spec: ConvNetSpec,
    /// Per conv layer: (weights out x in x k x k, bias per out channel).
    params: Vec<(Vec<f32>, Vec<f32>)>,
}

/// A rectangular region of a layer's grid, possibly extending past its edges.
#[derive(Debug, Clone, Copy)]
struct Region {
    row0: isize,
    col0: isize,
    rows: usize,
    cols: usize,
}

/// Activation values over a [`Region`].
struct Patch {
    channels: usize,
    region: Region,
    data: Vec<f32>,
}

impl Patch {
    #[inline]
    fn get(&self, c: usize, row: isize, col: isize) -> f32 {
        let r = (row - self.region.row0) as usize;
        let q = (col - self.region.col0) as usize;
        self.data[(c * self.region.rows + r) * self.region.cols + q]
    }
}

impl BoundNet {
    /// Binds a flat parameter vector in declaration order.
    pub fn from_values(spec: ConvNetSpec, values: &[f32]) -> Result<Self> {
        spec.validate()?;
        let expected = spec.param_count();
        if values.len() != expected {
            return Err(Error::WeightCount {
                expected,
                found: values.len(),
            });
        }
        let mut params = Vec::new();
        let mut rest = values;
        for c in spec.convs() {
            let (w, r) = rest.split_at(c.weight_count());
            let (b, r) = r.split_at(c.out_channels);
            params.push((w.to_vec(), b.to_vec()));
            rest = r;
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ConvNetSpec {
        &self.spec
    }

    /// Flat parameters in file order.
    pub fn values(&self) -> Vec<f32> {
        self.params
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    /// Full forward pass over a tensor.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (h, w) = self.output_shape(input)?;
        let region = Region {
            row0: 0,
            col0: 0,
            rows: h,
            cols: w,
        };
        let p = self.forward_region(input, region)?;
        Tensor::from_vec(1, h, w, p.data)
    }

    fn output_shape(&self, input: &Tensor) -> Result<(usize, usize)> {
        if input.channels != INPUT_CHANNELS {
            return Err(Error::InvalidNetwork(format!(
                "input has {} channels, network expects {INPUT_CHANNELS}",
                input.channels
            )));
        }
        self.spec
            .output_shape(input.height, input.width)
            .ok_or_else(|| {
                Error::InvalidNetwork(format!(
                    "input {}x{} too small for network",
                    input.height, input.width
                ))
            })
    }

    /// Evaluates the network on `out` (final-layer coordinates).
    fn forward_region(&self, input: &Tensor, out: Region) -> Result<Patch> {
        let convs: Vec<&ConvLayer> = self.spec.convs().collect();
        // extents[i] = (rows, cols) of the input to conv i; last = output.
        let mut extents = vec![(input.height, input.width)];
        for c in &convs {
            let (h, w) = *extents.last().unwrap();
            let next = (c.output_len(h), c.output_len(w));
            match next {
                (Some(h), Some(w)) => extents.push((h, w)),
                _ => return Err(Error::InvalidNetwork("input too small for network".into())),
            }
        }
        // regions[i] = region needed at the input of conv i.
        let mut regions = vec![out; convs.len() + 1];
        for (i, c) in convs.iter().enumerate().rev() {
            let r = regions[i + 1];
            let (s, p, k) = (c.stride as isize, c.padding as isize, c.kernel);
            regions[i] = Region {
                row0: r.row0 * s - p,
                col0: r.col0 * s - p,
                rows: (r.rows - 1) * c.stride + k,
                cols: (r.cols - 1) * c.stride + k,
            };
        }

        let mut level = 0;
        let mut patch = self.input_patch(input, regions[0]);
        let mut conv_idx = 0;
        for layer in &self.spec.layers {
            match layer {
                Layer::Conv(c) => {
                    let (w, b) = &self.params[conv_idx];
                    patch = conv_patch(&patch, c, w, b, regions[level + 1], extents[level + 1]);
                    level += 1;
                    conv_idx += 1;
                }
                Layer::Relu => patch.data.iter_mut().for_each(|v| *v = v.max(0.0)),
                Layer::Sigmoid => {
                    patch
                        .data
                        .iter_mut()
                        .for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
                    zero_outside(&mut patch, extents[level]);
                }
            }
        }
        Ok(patch)
    }

    fn input_patch(&self, input: &Tensor, region: Region) -> Patch {
        let mut data = vec![0.0; INPUT_CHANNELS * region.rows * region.cols];
        for c in 0..INPUT_CHANNELS {
            for r in 0..region.rows {
                let y = region.row0 + r as isize;
                if y < 0 || y >= input.height as isize {
                    continue;
                }
                for q in 0..region.cols {
                    let x = region.col0 + q as isize;
                    if x >= 0 && x < input.width as isize {
                        data[(c * region.rows + r) * region.cols + q] =
                            input.at(c, y as usize, x as usize);
                    }
                }
            }
        }
        Patch {
            channels: INPUT_CHANNELS,
            region,
            data,
        }
    }
}

fn zero_outside(p: &mut Patch, (h, w): (usize, usize)) {
    let reg = p.region;
    for c in 0..p.channels {
        for r in 0..reg.rows {
            let y = reg.row0 + r as isize;
            for q in 0..reg.cols {
                let x = reg.col0 + q as isize;
                if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                    p.data[(c * reg.rows + r) * reg.cols + q] = 0.0;
                }
            }
        }
    }
}

fn conv_patch(
    input: &Patch,
    c: &ConvLayer,
    weights: &[f32],
    bias: &[f32],
    out: Region,
    extent: (usize, usize),
) -> Patch {
    let k = c.kernel;
    let (s, p) = (c.stride as isize, c.padding as isize);
    let mut data = vec![0.0f32; c.out_channels * out.rows * out.cols];
    for o in 0..c.out_channels {
        let in_range = if c.depthwise {
            o..o + 1
        } else {
            0..c.in_channels
        };
        for r in 0..out.rows {
            let y = out.row0 + r as isize;
            if y < 0 || y >= extent.0 as isize {
                continue;
            }
            for q in 0..out.cols {
                let x = out.col0 + q as isize;
                if x < 0 || x >= extent.1 as isize {
                    continue;
                }
                let mut acc = bias[o];
                for (wi, ci) in in_range.clone().enumerate() {
                    let wbase = (o * in_range.len() + wi) * k * k;
                    for ky in 0..k {
                        let iy = y * s - p + ky as isize;
                        for kx in 0..k {
                            let ix = x * s - p + kx as isize;
                            acc += weights[wbase + ky * k + kx] * input.get(ci, iy, ix);
                        }
                    }
                }
                data[(o * out.rows + r) * out.cols + q] = acc;
            }
        }
    }
    Patch {
        channels: c.out_channels,
        region: out,
        data,
    }
}

/// Reads a network spec and its raw little-endian float32 weights.
pub fn load_weights(
    spec_path: impl AsRef<Path>,
    weights_path: impl AsRef<Path>,
) -> Result<BoundNet> {
    let spec_path = spec_path.as_ref();
    let text = std::fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let spec = ConvNetSpec::parse(&text)?;
    let weights_path = weights_path.as_ref();
    let bytes = std::fs::read(weights_path).map_err(|e| Error::io(weights_path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::InvalidArgument(format!(
            "weights file length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    BoundNet::from_values(spec, &values)
}

/// Runs the network over the feature stack in `tile_size` tiles (in parallel)
/// and thresholds the probabilities. The network must preserve the spatial
/// size of its input.
pub fn infer(
    net: &BoundNet,
    f: &FeatureStack,
    threshold: f64,
    tile_size: usize,
) -> Result<FloodCandidateMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be in (0,1), got {threshold}"
        )));
    }
    let input = Tensor::from_features(f)?;
    let (h, w) = net.output_shape(&input)?;
    if (h, w) != (input.height, input.width) {
        return Err(Error::InvalidNetwork(format!(
            "network maps {}x{} to {h}x{w}; inference needs a size-preserving network",
            input.height, input.width
        )));
    }
    let tiles = tile_grid(w, h, tile_size)?;
    let patches = tiles
        .par_iter()
        .map(|t| {
            let region = Region {
                row0: t.row_off as isize,
                col0: t.col_off as isize,
                rows: t.height,
                cols: t.width,
            };
            net.forward_region(&input, region).map(|p| (t, p))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut prob = vec![0.0f32; w * h];
    for (t, p) in patches {
        for r in 0..t.height {
            let dst = (t.row_off + r) * w + t.col_off;
            prob[dst..dst + t.width].copy_from_slice(&p.data[r * t.width..(r + 1) * t.width]);
        }
    }
    let mut mask = vec![0u8; w * h];
    for i in 0..w * h {
        if f.change_to_water_vv.is_nodata(i) && f.change_to_water_vh.is_nodata(i) {
            mask[i] = BINARY_NODATA;
            prob[i] = f32::NAN;
        } else {
            mask[i] = (prob[i] as f64 >= threshold) as u8;
        }
    }
    let t = *f.delta_vv.transform();
    Ok(FloodCandidateMask {
        mask: Raster::binary(w, h, t, mask)?,
        probability: Some(Raster::new(
            w,
            h,
            t,
            Some(f64::NAN),
            PixelData::Float32(prob),
        )?),
        threshold: Some(threshold),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        let text = "conv 4 8 3 1 1 depthwise=false\nrelu\n# head\nconv 8 1 1 1 0\nsigmoid\n";
        let spec = ConvNetSpec::parse(text).unwrap();
        assert_eq!(spec.layers.len(), 4);
        assert_eq!(ConvNetSpec::parse(&spec.to_text()).unwrap(), spec);
        assert_eq!(spec.param_count(), 8 * 4 * 9 + 8 + 8 + 1);
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(
            ConvNetSpec::parse(""),
            Err(Error::InvalidNetwork(_))
        ));
        assert!(ConvNetSpec::parse("conv 3 1 1 1 0\nsigmoid").is_err());
        assert!(ConvNetSpec::parse("conv 4 1 2 1 0\nsigmoid").is_err());
        assert!(ConvNetSpec::parse("conv 4 1 1 1 0").is_err());
        assert!(ConvNetSpec::parse("conv 4 2 1 1 0\nsigmoid").is_err());
        assert!(ConvNetSpec::parse("conv 4 2 3 1 1 depthwise=true\nsigmoid").is_err());
        assert!(matches!(
            ConvNetSpec::parse("conv 4 x 1 1 0\nsigmoid"),
            Err(Error::NetSpec { line: 1, .. })
        ));
        assert!(matches!(
            ConvNetSpec::parse("relu\nmaxpool\n"),
            Err(Error::NetSpec { line: 2, .. })
        ));
    }

    #[test]
    fn parameter_counts() {
        let s = ConvNetSpec::parse("conv 4 1 1 1 0\nsigmoid").unwrap();
        assert_eq!(s.param_count(), 5);
        let dw = ConvLayer {
            in_channels: 4,
            out_channels: 4,
            kernel: 3,
            stride: 1,
            padding: 1,
            depthwise: true,
        };
        assert_eq!(dw.param_count(), 40);
        assert!(matches!(
            BoundNet::from_values(s, &[0.0; 4]),
            Err(Error::WeightCount {
                expected: 5,
                found: 4
            })
        ));
    }

    #[test]
    fn identity_head_gives_half() {
        let s = ConvNetSpec::parse("conv 4 1 1 1 0\nsigmoid").unwrap();
        let net = BoundNet::from_values(s, &[0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let out = net.forward(&Tensor::zeros(4, 3, 3)).unwrap();
        assert!(out.data.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn strided_shapes() {
        let s = ConvNetSpec::parse("conv 4 2 3 2 1\nrelu\nconv 2 1 3 1 1\nsigmoid").unwrap();
        assert_eq!(s.output_shape(16, 9), Some((8, 5)));
        assert_eq!(s.output_shape(0, 0), None);
    }
}
