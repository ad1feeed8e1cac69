//! Fast stiffness application.
//!
//! Ordering the nodes row by row and padding every row with `n−1` zeros turns
//! `Ã_k` into a principal submatrix of one symmetric Toeplitz matrix of order
//! `m = (2n−1)·l − n + 1` whose first row is the generator vector. That
//! Toeplitz matrix is applied through a circulant embedding and real FFTs.

use std::fmt;
use std::sync::{Arc, Mutex};

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::assembly::{GeneratorVector, MomentVector};
use crate::error::{usage, Result};
use crate::mesh::MeshLevel;

/// Position of node `(col, row)` (one-based column) in the padded vector.
fn padded_position(nx: usize, col: usize, row: usize) -> usize {
    (2 * nx - 1) * row + col - 1
}

/// Pads a coefficient vector of `level` to the Toeplitz order, inserting
/// `n−1` zeros between consecutive rows.
pub fn embed(level: &MeshLevel, coeffs: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; level.toeplitz_dim()];
    embed_into(level, coeffs, &mut out)?;
    Ok(out)
}

/// [`embed`] into the leading part of `out`, which must already be zero.
fn embed_into(level: &MeshLevel, coeffs: &[f64], out: &mut [f64]) -> Result<()> {
    if coeffs.len() != level.dofs() {
        return usage(format!(
            "expected {} coefficients, got {}",
            level.dofs(),
            coeffs.len()
        ));
    }
    for (row, chunk) in coeffs.chunks(level.nx).enumerate() {
        let start = padded_position(level.nx, 1, row);
        out[start..start + level.nx].copy_from_slice(chunk);
    }
    Ok(())
}

/// Inverse of [`embed`]: keeps the positions that correspond to nodes.
pub fn restrict(level: &MeshLevel, padded: &[f64]) -> Result<Vec<f64>> {
    if padded.len() != level.toeplitz_dim() {
        return usage(format!(
            "expected a padded vector of length {}, got {}",
            level.toeplitz_dim(),
            padded.len()
        ));
    }
    Ok(restrict_from(level, padded))
}

fn restrict_from(level: &MeshLevel, padded: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(level.dofs());
    for row in 0..level.ny {
        let start = padded_position(level.nx, 1, row);
        out.extend_from_slice(&padded[start..start + level.nx]);
    }
    out
}

/// Symmetric Toeplitz operator of one level with its circulant spectrum cached.
///
/// Each application takes exclusive ownership of a set of FFT buffers from a
/// small pool and returns it afterwards, so a shared reference may be used
/// from several threads without re-allocating on every call.
pub struct ToeplitzOperator {
    level: MeshLevel,
    order: usize,
    circulant_len: usize,
    diagonal: f64,
    /// Eigenvalues of the circulant; real because the circulant is symmetric.
    spectrum: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    pool: Mutex<Vec<Buffers>>,
}

struct Buffers {
    time: Vec<f64>,
    freq: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Clone for ToeplitzOperator {
    fn clone(&self) -> Self {
        Self {
            level: self.level,
            order: self.order,
            circulant_len: self.circulant_len,
            diagonal: self.diagonal,
            spectrum: self.spectrum.clone(),
            forward: Arc::clone(&self.forward),
            inverse: Arc::clone(&self.inverse),
            pool: Mutex::new(Vec::new()),
        }
    }
}

impl fmt::Debug for ToeplitzOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToeplitzOperator")
            .field("level", &self.level.k)
            .field("order", &self.order)
            .field("circulant_len", &self.circulant_len)
            .finish()
    }
}

impl ToeplitzOperator {
    pub fn new(generator: &GeneratorVector) -> Self {
        let t = generator.values();
        let order = t.len();
        let circulant_len = (2 * order - 1).next_power_of_two().max(2);
        let mut column = vec![0.0; circulant_len];
        column[..order].copy_from_slice(t);
        for k in 1..order {
            column[circulant_len - k] = t[k];
        }
        let mut planner = RealFftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(circulant_len);
        let inverse = planner.plan_fft_inverse(circulant_len);
        let mut spectrum = forward.make_output_vec();
        forward
            .process(&mut column, &mut spectrum)
            .expect("buffer lengths come from the plan");
        // the 1/L of the inverse transform is folded into the eigenvalues
        let scale = 1.0 / circulant_len as f64;
        Self {
            level: *generator.level(),
            order,
            circulant_len,
            diagonal: t[0],
            spectrum: spectrum.iter().map(|z| z.re * scale).collect(),
            forward,
            inverse,
            pool: Mutex::new(Vec::new()),
        }
    }

    pub fn level(&self) -> &MeshLevel {
        &self.level
    }

    /// Order `m` of the Toeplitz matrix.
    pub fn dim(&self) -> usize {
        self.order
    }

    /// Length of the circulant embedding, a power of two `≥ 2m − 1`.
    pub fn circulant_len(&self) -> usize {
        self.circulant_len
    }

    /// The common diagonal entry of the stiffness matrix.
    pub fn diagonal(&self) -> f64 {
        self.diagonal
    }

    /// Zeroed buffers, from the pool when one is free.
    fn buffers(&self) -> Buffers {
        let pooled = self.pool.lock().map(|mut p| p.pop()).unwrap_or(None);
        match pooled {
            Some(mut bufs) => {
                bufs.time.fill(0.0);
                bufs
            }
            None => Buffers {
                time: self.forward.make_input_vec(),
                freq: self.forward.make_output_vec(),
                scratch: vec![
                    Complex::default();
                    self.forward
                        .get_scratch_len()
                        .max(self.inverse.get_scratch_len())
                ],
            },
        }
    }

    fn release(&self, bufs: Buffers) {
        if let Ok(mut pool) = self.pool.lock() {
            pool.push(bufs);
        }
    }

    /// Circulant product in place on `bufs.time`.
    fn convolve(&self, bufs: &mut Buffers) {
        let Buffers {
            time,
            freq,
            scratch,
        } = bufs;
        self.forward
            .process_with_scratch(time, freq, scratch)
            .expect("buffer lengths come from the plan");
        for (z, &lambda) in freq.iter_mut().zip(&self.spectrum) {
            *z *= lambda;
        }
        // real input has real first and Nyquist coefficients; clear round-off
        freq[0].im = 0.0;
        if let Some(last) = freq.last_mut() {
            last.im = 0.0;
        }
        self.inverse
            .process_with_scratch(freq, time, scratch)
            .expect("buffer lengths come from the plan");
    }

    /// Toeplitz product on padded vectors of length [`dim`](Self::dim).
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.order {
            return usage(format!(
                "expected a vector of length {}, got {}",
                self.order,
                x.len()
            ));
        }
        let mut bufs = self.buffers();
        bufs.time[..self.order].copy_from_slice(x);
        self.convolve(&mut bufs);
        let out = bufs.time[..self.order].to_vec();
        self.release(bufs);
        Ok(out)
    }

    /// `Ã_k U` as raw values.
    pub fn apply(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.level.dofs() {
            return usage(format!(
                "expected {} coefficients, got {}",
                self.level.dofs(),
                coeffs.len()
            ));
        }
        let mut bufs = self.buffers();
        embed_into(&self.level, coeffs, &mut bufs.time)?;
        self.convolve(&mut bufs);
        let out = restrict_from(&self.level, &bufs.time);
        self.release(bufs);
        Ok(out)
    }

    /// `Ã_k U`: the moments `(A_k u, φ^m)` of the function with coefficients `U`.
    pub fn apply_stiffness(&self, coeffs: &[f64]) -> Result<MomentVector> {
        MomentVector::new(&self.level, self.apply(coeffs)?)
    }
}
