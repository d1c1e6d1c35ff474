//! Row-major complex and real grids plus the handful of vector operations the
//! solvers need.
//!
//! Fields are flat vectors with a shape attached. Every operation is
//! elementwise or a full reduction, so a 2-D grid and its column-stacked
//! vector are interchangeable.

use std::io::{Read, Write};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Shape of a row-major grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn square(n: usize) -> Self {
        Self { rows: n, cols: n }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, other: &Shape) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            })
        }
    }
}

/// Complex-valued grid (wavefront samples, transformed fields, search directions).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    shape: Shape,
    values: Vec<Complex64>,
}

/// Real-valued grid (intensities, amplitudes, phases).
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    shape: Shape,
    values: Vec<f64>,
}

macro_rules! field_common {
    ($ty:ident, $elem:ty) => {
        impl $ty {
            pub fn from_vec(shape: Shape, values: Vec<$elem>) -> Result<Self> {
                if shape.rows == 0 || shape.cols == 0 {
                    return Err(Error::Domain("field dimensions must be positive".into()));
                }
                if values.len() != shape.len() {
                    return Err(Error::Domain(format!(
                        "field of shape {}x{} needs {} values, got {}",
                        shape.rows,
                        shape.cols,
                        shape.len(),
                        values.len()
                    )));
                }
                Ok(Self { shape, values })
            }

            pub fn filled(shape: Shape, value: $elem) -> Self {
                Self {
                    shape,
                    values: vec![value; shape.len()],
                }
            }

            pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> $elem) -> Self {
                let mut values = Vec::with_capacity(shape.len());
                for r in 0..shape.rows {
                    for c in 0..shape.cols {
                        values.push(f(r, c));
                    }
                }
                Self { shape, values }
            }

            #[inline]
            pub fn shape(&self) -> Shape {
                self.shape
            }

            #[inline]
            pub fn rows(&self) -> usize {
                self.shape.rows
            }

            #[inline]
            pub fn cols(&self) -> usize {
                self.shape.cols
            }

            #[inline]
            pub fn len(&self) -> usize {
                self.values.len()
            }

            #[inline]
            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            #[inline]
            pub fn values(&self) -> &[$elem] {
                &self.values
            }

            #[inline]
            pub fn values_mut(&mut self) -> &mut [$elem] {
                &mut self.values
            }

            pub fn into_values(self) -> Vec<$elem> {
                self.values
            }

            #[inline]
            pub fn get(&self, row: usize, col: usize) -> $elem {
                self.values[row * self.shape.cols + col]
            }

            #[inline]
            pub fn set(&mut self, row: usize, col: usize, value: $elem) {
                self.values[row * self.shape.cols + col] = value;
            }

            pub fn map(&self, f: impl Fn($elem) -> $elem) -> Self {
                Self {
                    shape: self.shape,
                    values: self.values.iter().map(|&v| f(v)).collect(),
                }
            }

            pub fn ensure_shape(&self, shape: Shape) -> Result<()> {
                self.shape.check(&shape)
            }
        }
    };
}

field_common!(ComplexField, Complex64);
field_common!(RealField, f64);

impl ComplexField {
    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, Complex64::new(0.0, 0.0))
    }

    pub fn ones(shape: Shape) -> Self {
        Self::filled(shape, Complex64::new(1.0, 0.0))
    }

    /// Builds `amplitude * exp(i * 2π * phase_waves)`.
    pub fn from_polar(amplitude: &RealField, phase_waves: &RealField) -> Result<Self> {
        amplitude.shape.check(&phase_waves.shape)?;
        let values = amplitude
            .values
            .iter()
            .zip(&phase_waves.values)
            .map(|(&a, &p)| Complex64::from_polar(a, std::f64::consts::TAU * p))
            .collect();
        Ok(Self {
            shape: amplitude.shape,
            values,
        })
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn abs(&self) -> RealField {
        RealField {
            shape: self.shape,
            values: self.values.iter().map(|v| v.norm()).collect(),
        }
    }

    pub fn abs_sqr(&self) -> RealField {
        RealField {
            shape: self.shape,
            values: self.values.iter().map(|v| v.norm_sqr()).collect(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        self.map(|v| v * s)
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &ComplexField) {
        debug_assert_eq!(self.shape, x.shape);
        for (a, b) in self.values.iter_mut().zip(&x.values) {
            *a += b * alpha;
        }
    }

    /// Returns `self + alpha * x` without touching `self`.
    pub fn added(&self, alpha: f64, x: &ComplexField) -> Self {
        let mut out = self.clone();
        out.axpy(alpha, x);
        out
    }

    /// `Re⟨self, other⟩`, the real inner product every line-search formula uses.
    pub fn re_dot(&self, other: &ComplexField) -> f64 {
        debug_assert_eq!(self.shape, other.shape);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn real_part(&self) -> RealField {
        RealField {
            shape: self.shape,
            values: self.values.iter().map(|v| v.re).collect(),
        }
    }
}

impl RealField {
    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn sqrt(&self) -> Self {
        self.map(f64::sqrt)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            shape: self.shape,
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// `⟨a, b⟩ = Σ conj(a_i) b_i`.
pub fn inner(a: &ComplexField, b: &ComplexField) -> Result<Complex64> {
    a.shape.check(&b.shape)?;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x.conj() * y)
        .sum())
}

/// Elementwise product of two fields of any real/complex mix.
pub fn hadamard<A: Hadamard<B>, B>(a: &A, b: &B) -> Result<A::Output> {
    a.hadamard(b)
}

pub trait Hadamard<Rhs> {
    type Output;
    fn hadamard(&self, rhs: &Rhs) -> Result<Self::Output>;
}

impl Hadamard<ComplexField> for ComplexField {
    type Output = ComplexField;
    fn hadamard(&self, rhs: &ComplexField) -> Result<ComplexField> {
        self.shape.check(&rhs.shape)?;
        Ok(ComplexField {
            shape: self.shape,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a * b).collect(),
        })
    }
}

impl Hadamard<RealField> for ComplexField {
    type Output = ComplexField;
    fn hadamard(&self, rhs: &RealField) -> Result<ComplexField> {
        self.shape.check(&rhs.shape)?;
        Ok(ComplexField {
            shape: self.shape,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a * b).collect(),
        })
    }
}

impl Hadamard<ComplexField> for RealField {
    type Output = ComplexField;
    fn hadamard(&self, rhs: &ComplexField) -> Result<ComplexField> {
        rhs.hadamard(self)
    }
}

impl Hadamard<RealField> for RealField {
    type Output = RealField;
    fn hadamard(&self, rhs: &RealField) -> Result<RealField> {
        self.shape.check(&rhs.shape)?;
        Ok(RealField {
            shape: self.shape,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a * b).collect(),
        })
    }
}

/// Relative error of `estimate` against `truth` after removing the global
/// phase: `min_{|c|=1} ‖c·truth − estimate‖ / ‖truth‖`.
pub fn aligned_rms(truth: &ComplexField, estimate: &ComplexField) -> Result<f64> {
    let overlap = inner(truth, estimate)?;
    let truth_norm = truth.norm();
    if truth_norm == 0.0 {
        return Err(Error::Domain("aligned RMS needs a nonzero reference field".into()));
    }
    let magnitude = overlap.norm();
    let c = if magnitude == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        overlap / magnitude
    };
    let residual: f64 = truth
        .values
        .iter()
        .zip(&estimate.values)
        .map(|(u, v)| (c * u - v).norm_sqr())
        .sum();
    Ok(residual.sqrt() / truth_norm)
}

impl Add for &ComplexField {
    type Output = ComplexField;
    fn add(self, rhs: &ComplexField) -> ComplexField {
        self.added(1.0, rhs)
    }
}

impl Sub for &ComplexField {
    type Output = ComplexField;
    fn sub(self, rhs: &ComplexField) -> ComplexField {
        self.added(-1.0, rhs)
    }
}

impl Neg for &ComplexField {
    type Output = ComplexField;
    fn neg(self) -> ComplexField {
        self.map(|v| -v)
    }
}

impl Mul<f64> for &ComplexField {
    type Output = ComplexField;
    fn mul(self, rhs: f64) -> ComplexField {
        self.scale(rhs)
    }
}

impl AddAssign<&ComplexField> for ComplexField {
    fn add_assign(&mut self, rhs: &ComplexField) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&ComplexField> for ComplexField {
    fn sub_assign(&mut self, rhs: &ComplexField) {
        self.axpy(-1.0, rhs);
    }
}

// Binary container: "PDFIELD1", kind byte (0 real, 1 complex), 7 pad bytes,
// rows u64 LE, cols u64 LE, then f64 LE values (re, im interleaved for complex).
const MAGIC: &[u8; 8] = b"PDFIELD1";
const KIND_REAL: u8 = 0;
const KIND_COMPLEX: u8 = 1;

fn write_header(w: &mut impl Write, kind: u8, shape: Shape) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[kind, 0, 0, 0, 0, 0, 0, 0])?;
    w.write_all(&(shape.rows as u64).to_le_bytes())?;
    w.write_all(&(shape.cols as u64).to_le_bytes())?;
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<(u8, Shape)> {
    let mut head = [0u8; 32];
    r.read_exact(&mut head)?;
    if &head[..8] != MAGIC {
        return Err(Error::Format("not a field container (bad magic)".into()));
    }
    let kind = head[8];
    let rows = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(head[24..32].try_into().unwrap()) as usize;
    Ok((kind, Shape::new(rows, cols)))
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

impl ComplexField {
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        write_header(w, KIND_COMPLEX, self.shape)?;
        let mut buf = Vec::with_capacity(self.len() * 16);
        for v in &self.values {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let (kind, shape) = read_header(r)?;
        if kind != KIND_COMPLEX {
            return Err(Error::Format("container holds a real field".into()));
        }
        let raw = read_f64s(r, shape.len() * 2)?;
        let values = raw
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        Self::from_vec(shape, values)
    }

    /// One line per grid row, entries as `re+imi` separated by commas.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.shape.cols) {
            let line: Vec<String> = row.iter().map(|v| format_complex(*v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (shape, cells) = split_csv(text)?;
        let values = cells
            .iter()
            .map(|c| parse_complex(c))
            .collect::<Result<Vec<_>>>()?;
        Self::from_vec(shape, values)
    }
}

impl RealField {
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        write_header(w, KIND_REAL, self.shape)?;
        let mut buf = Vec::with_capacity(self.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let (kind, shape) = read_header(r)?;
        if kind != KIND_REAL {
            return Err(Error::Format("container holds a complex field".into()));
        }
        let values = read_f64s(r, shape.len())?;
        Self::from_vec(shape, values)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.shape.cols) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let (shape, cells) = split_csv(text)?;
        let values = cells
            .iter()
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad real '{c}': {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_vec(shape, values)
    }
}

fn split_csv(text: &str) -> Result<(Shape, Vec<String>)> {
    let mut cols = None;
    let mut rows = 0;
    let mut cells = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Format(format!(
                    "ragged CSV: row {rows} has {} entries, expected {c}",
                    row.len()
                )))
            }
            _ => {}
        }
        rows += 1;
        cells.extend(row);
    }
    let cols = cols.ok_or_else(|| Error::Format("empty CSV".into()))?;
    Ok((Shape::new(rows, cols), cells))
}

fn format_complex(v: Complex64) -> String {
    // `{:+e}` always emits the sign so the imaginary part is unambiguous.
    format!("{:e}{:+e}i", v.re, v.im)
}

fn parse_complex(cell: &str) -> Result<Complex64> {
    let s = cell.trim();
    let bad = || Error::Format(format!("bad complex '{s}'"));
    let body = s.strip_suffix('i').ok_or_else(bad)?;
    // split at the last sign that is not part of an exponent and not leading
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| {
            (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E')
        })
        .ok_or_else(bad)?;
    let re = body[..split].parse::<f64>().map_err(|_| bad())?;
    let im = body[split..].parse::<f64>().map_err(|_| bad())?;
    Ok(Complex64::new(re, im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn vec2(a: Complex64, b: Complex64) -> ComplexField {
        ComplexField::from_vec(Shape::new(1, 2), vec![a, b]).unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, shape: Shape) -> ComplexField {
        ComplexField::from_fn(shape, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn inner_examples() {
        let i = c(0.0, 1.0);
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        assert_eq!(inner(&vec2(one, i), &vec2(one, i)).unwrap(), c(2.0, 0.0));
        assert_eq!(inner(&vec2(one, zero), &vec2(zero, one)).unwrap(), zero);
        assert_eq!(inner(&vec2(i, zero), &vec2(one, zero)).unwrap(), c(0.0, -1.0));
    }

    #[test]
    fn inner_shape_mismatch() {
        let a = ComplexField::zeros(Shape::new(1, 2));
        let b = ComplexField::zeros(Shape::new(2, 1));
        assert!(matches!(inner(&a, &b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn hadamard_examples() {
        let a = RealField::from_vec(Shape::new(1, 2), vec![1.0, 2.0]).unwrap();
        let b = RealField::from_vec(Shape::new(1, 2), vec![3.0, 4.0]).unwrap();
        assert_eq!(hadamard(&a, &b).unwrap().values(), &[3.0, 8.0]);

        let i = c(0.0, 1.0);
        let z = vec2(i, i);
        assert_eq!(hadamard(&z, &z).unwrap().values(), &[c(-1.0, 0.0), c(-1.0, 0.0)]);

        let ones = RealField::filled(z.shape(), 1.0);
        assert_eq!(hadamard(&z, &ones).unwrap(), z);
        assert!(hadamard(&a, &RealField::zeros(Shape::new(2, 1))).is_err());
    }

    #[test]
    fn aligned_rms_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_field(&mut rng, Shape::new(2, 4));
        for theta in [0.0, 0.3, 2.0, -3.0] {
            let rotated = u.scale_complex(Complex64::from_polar(1.0, theta));
            assert!(aligned_rms(&u, &rotated).unwrap() < 1e-14);
        }
        let zero = ComplexField::zeros(u.shape());
        assert!((aligned_rms(&u, &zero).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(aligned_rms(&zero, &u), Err(Error::Domain(_))));
    }

    #[test]
    fn aligned_rms_matches_phase_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shape = Shape::new(1, 8);
        for _ in 0..3 {
            let u = random_field(&mut rng, shape);
            let v = random_field(&mut rng, shape);
            let steps = 1_000_000;
            let mut best = f64::INFINITY;
            for k in 0..steps {
                let cphase = Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / steps as f64);
                let r: f64 = u
                    .values()
                    .iter()
                    .zip(v.values())
                    .map(|(a, b)| (cphase * a - b).norm_sqr())
                    .sum();
                best = best.min(r);
            }
            let sweep = best.sqrt() / u.norm();
            assert!((sweep - aligned_rms(&u, &v).unwrap()).abs() < 1e-5);
        }
    }

    #[test]
    fn closed_form_phase_is_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = Shape::new(2, 3);
        for _ in 0..100 {
            let u = random_field(&mut rng, shape);
            let v = random_field(&mut rng, shape);
            let best = aligned_rms(&u, &v).unwrap();
            for _ in 0..50 {
                let cphase = Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
                let r = (&u.scale_complex(cphase) - &v).norm() / u.norm();
                assert!(r >= best - 1e-10);
            }
        }
    }

    #[test]
    fn csv_and_binary_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_field(&mut rng, Shape::new(3, 2));
        assert_eq!(ComplexField::from_csv(&u.to_csv()).unwrap(), u);
        let mut buf = Vec::new();
        u.write_binary(&mut buf).unwrap();
        assert_eq!(ComplexField::read_binary(&mut buf.as_slice()).unwrap(), u);
        assert!(RealField::read_binary(&mut buf.as_slice()).is_err());

        let r = u.abs();
        assert_eq!(RealField::from_csv(&r.to_csv()).unwrap(), r);
    }

    #[test]
    fn csv_parses_hand_written_cells() {
        let f = ComplexField::from_csv("1+2i,-3.5e-2-1e3i\n0+0i,4-0i\n").unwrap();
        assert_eq!(f.get(0, 1), c(-3.5e-2, -1e3));
        assert_eq!(f.get(1, 0), c(0.0, 0.0));
        assert!(ComplexField::from_csv("1+2i,3\n").is_err());
        assert!(ComplexField::from_csv("1+2i\n1+2i,1+1i\n").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field_strategy() -> impl Strategy<Value = (ComplexField, ComplexField)> {
            proptest::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64), 6)
                .prop_map(|v| {
                    let shape = Shape::new(2, 3);
                    let a = v.iter().map(|t| c(t.0, t.1)).collect();
                    let b = v.iter().map(|t| c(t.2, t.3)).collect();
                    (
                        ComplexField::from_vec(shape, a).unwrap(),
                        ComplexField::from_vec(shape, b).unwrap(),
                    )
                })
        }

        proptest! {
            #[test]
            fn inner_is_hermitian((a, b) in field_strategy()) {
                let ab = inner(&a, &b).unwrap();
                let ba = inner(&b, &a).unwrap();
                prop_assert!((ab - ba.conj()).norm() < 1e-12);
                let aa = inner(&a, &a).unwrap();
                prop_assert!(aa.im.abs() < 1e-12 && aa.re >= 0.0);
            }

            #[test]
            fn aligned_rms_ignores_global_phase((a, b) in field_strategy(), theta in -10.0..10.0f64) {
                prop_assume!(a.norm() > 1e-3);
                let rotated = b.scale_complex(Complex64::from_polar(1.0, theta));
                let d = aligned_rms(&a, &b).unwrap() - aligned_rms(&a, &rotated).unwrap();
                prop_assert!(d.abs() < 1e-12);
            }
        }
    }
}
