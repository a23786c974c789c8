use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, Mlp, NnError, Normalization, Provenance, Surrogate};

pub const MAGIC: &[u8; 4] = b"SWNN";
pub const FORMAT_VERSION: u32 = 1;

/// Binary layout, little endian:
///
/// ```text
/// "SWNN" | u32 version | u8 activation | u32 n_dims | u32 dims...
/// f64 weights, layer by layer, row-major (fan_out x fan_in)
/// f64 biases, layer by layer
/// f64 input shift | input scale | output offset | output scale
/// u64 length | provenance JSON
/// ```
pub fn to_bytes(model: &Surrogate) -> Vec<u8> {
    let mlp = &model.mlp;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(mlp.activation().code());
    out.extend_from_slice(&(mlp.dims().len() as u32).to_le_bytes());
    for &d in mlp.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let put = |out: &mut Vec<u8>, v: &mut dyn Iterator<Item = &f64>| {
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    for w in mlp.weights() {
        put(&mut out, &mut w.iter());
    }
    for b in mlp.biases() {
        put(&mut out, &mut b.iter());
    }
    let n = &model.norm;
    for v in [&n.input_shift, &n.input_scale, &n.output_offset, &n.output_scale] {
        put(&mut out, &mut v.iter());
    }
    let json = serde_json::to_vec(&model.provenance).expect("provenance serializes");
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NnError> {
        if self.buf.len() - self.pos < n {
            return Err(NnError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, NnError> {
        let bytes = self.take(n.checked_mul(8).ok_or(NnError::Truncated)?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Surrogate, NnError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4).map_err(|_| NnError::BadMagic)? != MAGIC {
        return Err(NnError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(NnError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let code = r.take(1)?[0];
    let activation =
        Activation::from_code(code).ok_or_else(|| NnError::Corrupt(format!("activation {code}")))?;
    let n_dims = r.u32()? as usize;
    if !(2..=64).contains(&n_dims) {
        return Err(NnError::Corrupt(format!("{n_dims} layer dims")));
    }
    let dims: Vec<usize> = (0..n_dims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_, _>>()?;
    let mut weights = Vec::new();
    for d in dims.windows(2) {
        let data = r.f64s(d[0] * d[1])?;
        weights.push(Array2::from_shape_vec((d[1], d[0]), data).expect("sized above"));
    }
    let mut biases = Vec::new();
    for &d in &dims[1..] {
        biases.push(Array1::from(r.f64s(d)?));
    }
    let mlp = Mlp::new(weights, biases, activation)?;
    let (n_in, n_out) = (dims[0], dims[n_dims - 1]);
    let norm = Normalization {
        input_shift: r.f64s(n_in)?,
        input_scale: r.f64s(n_in)?,
        output_offset: r.f64s(n_out)?,
        output_scale: r.f64s(n_out)?,
    };
    let len = r.u64()? as usize;
    let provenance: Provenance = serde_json::from_slice(r.take(len)?)
        .map_err(|e| NnError::Corrupt(format!("provenance: {e}")))?;
    if r.pos != buf.len() {
        return Err(NnError::Corrupt("trailing bytes".into()));
    }
    Surrogate::new(mlp, norm, provenance)
}

pub fn save_model(model: &Surrogate, path: &Path) -> Result<(), NnError> {
    std::fs::write(path, to_bytes(model)).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<Surrogate, NnError> {
    let buf = std::fs::read(path).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))?;
    from_bytes(&buf)
}
