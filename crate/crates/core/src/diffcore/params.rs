use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, MlpSpec, Real};
use crate::error::{ensure, Error, Result};
use crate::io::framed;
use crate::rng;

/// Version of the flat parameter layout written into checkpoints.
pub const LAYOUT_VERSION: u32 = 1;

/// Flat-vector offsets of every weight matrix and bias vector.
///
/// Layer `l` stores its weight matrix row-major as `(out, in)` followed by its
/// bias vector; layers are laid out in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    widths: Vec<usize>,
    weight_offsets: Vec<usize>,
    bias_offsets: Vec<usize>,
    len: usize,
}

impl Layout {
    pub fn new(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut weight_offsets = Vec::new();
        let mut bias_offsets = Vec::new();
        let mut off = 0;
        for w in spec.layer_widths.windows(2) {
            weight_offsets.push(off);
            off += w[0] * w[1];
            bias_offsets.push(off);
            off += w[1];
        }
        Ok(Self { widths: spec.layer_widths.clone(), weight_offsets, bias_offsets, len: off })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_layers(&self) -> usize {
        self.weight_offsets.len()
    }

    /// `(fan_in, fan_out)` of layer `l`.
    pub fn dims(&self, l: usize) -> (usize, usize) {
        (self.widths[l], self.widths[l + 1])
    }

    pub fn weight(&self, l: usize, row: usize, col: usize) -> usize {
        let (n_in, n_out) = self.dims(l);
        assert!(row < n_out && col < n_in);
        self.weight_offsets[l] + row * n_in + col
    }

    pub fn bias(&self, l: usize, j: usize) -> usize {
        assert!(j < self.dims(l).1);
        self.bias_offsets[l] + j
    }

    pub(crate) fn weight_range(&self, l: usize) -> std::ops::Range<usize> {
        self.weight_offsets[l]..self.bias_offsets[l]
    }

    pub(crate) fn bias_range(&self, l: usize) -> std::ops::Range<usize> {
        self.bias_offsets[l]..self.bias_offsets[l] + self.dims(l).1
    }
}

/// Parameters of one network as a flat vector.
///
/// `version` increments on every mutation so tapes recorded against older
/// values can be rejected. Equality compares architecture and values only.
#[derive(Debug, Clone)]
pub struct ParamSet<T> {
    spec: MlpSpec,
    layout: Layout,
    values: Vec<T>,
    version: u64,
    seed: Option<u64>,
}

impl<T: PartialEq> PartialEq for ParamSet<T> {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.values == other.values
    }
}

impl<T: Real> ParamSet<T> {
    pub fn zeros(spec: &MlpSpec) -> Result<Self> {
        let layout = Layout::new(spec)?;
        Ok(Self { spec: spec.clone(), values: vec![T::zero(); layout.len()], layout, version: 0, seed: None })
    }

    pub fn from_values(spec: &MlpSpec, values: Vec<T>) -> Result<Self> {
        let layout = Layout::new(spec)?;
        ensure!(
            values.len() == layout.len(),
            Shape,
            "{} values for a layout of {}",
            values.len(),
            layout.len()
        );
        Ok(Self { spec: spec.clone(), layout, values, version: 0, seed: None })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Mutable access; bumps the version.
    pub fn values_mut(&mut self) -> &mut [T] {
        self.version += 1;
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Convert to another scalar type.
    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            spec: self.spec.clone(),
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| U::of(v.f64())).collect(),
            version: 0,
            seed: self.seed,
        }
    }

    pub fn header(&self) -> ParamHeader {
        ParamHeader {
            spec: self.spec.clone(),
            layout_version: LAYOUT_VERSION,
            seed: self.seed,
            len: self.values.len(),
        }
    }

    /// Little-endian f64 payload.
    pub fn payload(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.f64().to_le_bytes()).collect()
    }

    pub fn from_parts(header: &ParamHeader, payload: &[u8]) -> Result<Self> {
        ensure!(
            header.layout_version == LAYOUT_VERSION,
            Format,
            "unsupported layout version {}",
            header.layout_version
        );
        ensure!(payload.len() == header.len * 8, Format, "payload holds {} bytes, expected {}", payload.len(), header.len * 8);
        let values = payload
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect();
        let mut p = Self::from_values(&header.spec, values).map_err(|e| Error::Format(e.to_string()))?;
        p.seed = header.seed;
        Ok(p)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        framed::write(w, &self.header(), &self.payload())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let (header, payload): (ParamHeader, _) = framed::read(r)?;
        Self::from_parts(&header, &payload)
    }
}

/// Checkpoint header preceding the f64 payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamHeader {
    pub spec: MlpSpec,
    pub layout_version: u32,
    pub seed: Option<u64>,
    pub len: usize,
}

/// SIREN initialization: first-layer weights `U(-1/n, 1/n)`, deeper weights
/// `U(-sqrt(6/n)/w0, sqrt(6/n)/w0)` with `n` the fan-in, zero biases.
pub fn init_siren<T: Real>(spec: &MlpSpec, seed: u64) -> Result<ParamSet<T>> {
    let Activation::Sine { w0 } = spec.activation else {
        return Err(Error::Config("SIREN initialization requires sine activations".into()));
    };
    init_with(spec, seed, |l, fan_in| {
        if l == 0 {
            1.0 / fan_in as f64
        } else {
            (6.0 / fan_in as f64).sqrt() / w0
        }
    })
}

/// Initialization matched to the spec's activation: SIREN for sine, He-uniform
/// otherwise.
pub fn init_default<T: Real>(spec: &MlpSpec, seed: u64) -> Result<ParamSet<T>> {
    match spec.activation {
        Activation::Sine { .. } => init_siren(spec, seed),
        Activation::Relu | Activation::Linear => {
            init_with(spec, seed, |_, fan_in| (6.0 / fan_in as f64).sqrt())
        }
    }
}

fn init_with<T: Real>(spec: &MlpSpec, seed: u64, bound: impl Fn(usize, usize) -> f64) -> Result<ParamSet<T>> {
    let mut p = ParamSet::zeros(spec)?;
    let layout = p.layout.clone();
    for l in 0..layout.n_layers() {
        let (fan_in, _) = layout.dims(l);
        let b = bound(l, fan_in);
        let mut r = rng::stream(seed, &[l as u64]);
        for v in &mut p.values[layout.weight_range(l)] {
            *v = T::of(r.random_range(-b..=b));
        }
    }
    p.seed = Some(seed);
    Ok(p)
}
