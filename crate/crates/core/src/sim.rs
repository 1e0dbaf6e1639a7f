//! Exact simulation of fractional Brownian motion on a uniform grid.
//!
//! The fast path embeds the fractional Gaussian noise autocovariance in a
//! circulant matrix of size `2n` and samples through two FFTs per path. A dense
//! Cholesky factorisation of the path covariance serves as a slow reference.

use std::fmt;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HurstModel;

/// Default largest `n` accepted by the Cholesky sampler.
pub const DEFAULT_CHOLESKY_CAP: usize = 4096;

/// Relative tolerance for negative circulant eigenvalues.
pub const EMBEDDING_TOL: f64 = 1e-10;

/// `n` steps of size `T/n` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    horizon: f64,
}

impl GridSpec {
    pub fn new(n: usize, horizon: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("grid needs at least 2 steps, got {n}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { n, horizon })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n as f64
    }

    /// `t_k = k dt`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Circulant,
    Cholesky,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Circulant => "circulant",
            Method::Cholesky => "cholesky",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "circulant" => Ok(Method::Circulant),
            "cholesky" => Ok(Method::Cholesky),
            _ => Err(Error::Config(format!("unknown simulation method {s:?}"))),
        }
    }
}

/// A sampled path `(B_{t_0}, ..., B_{t_n})` with `B_{t_0} = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmPath {
    pub model: HurstModel,
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub seed: u64,
    pub method: Method,
}

impl FbmPath {
    /// Wraps externally supplied values, e.g. deterministic test paths.
    pub fn from_values(model: HurstModel, grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() + 1 {
            return Err(Error::domain(format!(
                "expected {} values, got {}",
                grid.n() + 1,
                values.len()
            )));
        }
        if values[0] != 0.0 || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("path must start at 0 and be finite"));
        }
        Ok(Self { model, grid, values, seed: 0, method: Method::Cholesky })
    }
}

/// `γ(k) = dt^{2H}/2 (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H})`.
pub fn fgn_autocovariance(model: &HurstModel, grid: &GridSpec, k: usize) -> Result<f64> {
    if k > grid.n() {
        return Err(Error::domain(format!("lag {k} exceeds grid size {}", grid.n())));
    }
    Ok(fgn_acov_raw(model.hurst(), grid.dt(), k))
}

fn fgn_acov_raw(h: f64, dt: f64, k: usize) -> f64 {
    let h2 = 2.0 * h;
    let k = k as f64;
    let p = |x: f64| x.abs().powf(h2);
    0.5 * dt.powf(h2) * (p(k + 1.0) - 2.0 * p(k) + p(k - 1.0))
}

/// Circulant-embedding sampler; the eigenvalue table is built once per `(H, T, n)`.
#[derive(Clone)]
pub struct CirculantSampler {
    model: HurstModel,
    grid: GridSpec,
    /// `sqrt(λ_j / 2n)`
    amplitudes: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CirculantSampler").field("model", &self.model).field("grid", &self.grid).finish()
    }
}

impl CirculantSampler {
    pub fn new(model: &HurstModel, grid: &GridSpec) -> Result<Self> {
        let n = grid.n();
        let m = 2 * n;
        let h = model.hurst();
        let dt = grid.dt();
        let mut row: Vec<Complex64> = (0..m)
            .map(|j| {
                let lag = if j <= n { j } else { m - j };
                Complex64::new(fgn_acov_raw(h, dt, lag), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut row);
        let eig: Vec<f64> = row.iter().map(|c| c.re).collect();
        let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let tolerance = EMBEDDING_TOL * max;
        if min < -tolerance {
            return Err(Error::Embedding { min_eigenvalue: min, tolerance: -tolerance });
        }
        let amplitudes = eig.iter().map(|&l| (l.max(0.0) / m as f64).sqrt()).collect();
        Ok(Self { model: *model, grid: *grid, amplitudes, fft })
    }

    /// Fractional Gaussian noise of length `n`.
    pub fn sample_fgn<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut buf: Vec<Complex64> = self
            .amplitudes
            .iter()
            .map(|&a| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(a * re, a * im)
            })
            .collect();
        self.fft.process(&mut buf);
        buf[..self.grid.n()].iter().map(|c| c.re).collect()
    }
}

/// Dense Cholesky sampler of `(B_{t_1}, ..., B_{t_n})`.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    model: HurstModel,
    grid: GridSpec,
    lower: DMatrix<f64>,
}

impl CholeskySampler {
    pub fn new(model: &HurstModel, grid: &GridSpec) -> Result<Self> {
        Self::with_cap(model, grid, DEFAULT_CHOLESKY_CAP)
    }

    pub fn with_cap(model: &HurstModel, grid: &GridSpec, cap: usize) -> Result<Self> {
        let n = grid.n();
        if n > cap {
            return Err(Error::Config(format!("Cholesky sampling is capped at n = {cap}, got {n}")));
        }
        let h2 = 2.0 * model.hurst();
        let cov = DMatrix::from_fn(n, n, |i, j| {
            let t = grid.time(i + 1);
            let s = grid.time(j + 1);
            0.5 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2))
        });
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Numeric("path covariance is not positive definite".into()))?;
        Ok(Self { model: *model, grid: *grid, lower: chol.l() })
    }

    pub fn sample_values<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.grid.n();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = &self.lower * z;
        std::iter::once(0.0).chain(b.iter().copied()).collect()
    }
}

/// A sampler for either method, reusable across paths.
#[derive(Debug, Clone)]
pub enum Sampler {
    Circulant(CirculantSampler),
    Cholesky(CholeskySampler),
}

impl Sampler {
    pub fn new(model: &HurstModel, grid: &GridSpec, method: Method) -> Result<Self> {
        Ok(match method {
            Method::Circulant => Sampler::Circulant(CirculantSampler::new(model, grid)?),
            Method::Cholesky => Sampler::Cholesky(CholeskySampler::new(model, grid)?),
        })
    }

    pub fn method(&self) -> Method {
        match self {
            Sampler::Circulant(_) => Method::Circulant,
            Sampler::Cholesky(_) => Method::Cholesky,
        }
    }

    pub fn model(&self) -> &HurstModel {
        match self {
            Sampler::Circulant(s) => &s.model,
            Sampler::Cholesky(s) => &s.model,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        match self {
            Sampler::Circulant(s) => &s.grid,
            Sampler::Cholesky(s) => &s.grid,
        }
    }

    /// Path number `index` of the ensemble seeded by `master_seed`.
    pub fn path(&self, master_seed: u64, index: u64) -> FbmPath {
        let mut rng = path_rng(master_seed, index);
        let values = match self {
            Sampler::Circulant(s) => {
                let mut values = Vec::with_capacity(s.grid.n() + 1);
                values.push(0.0);
                let mut acc = 0.0;
                for x in s.sample_fgn(&mut rng) {
                    acc += x;
                    values.push(acc);
                }
                values
            }
            Sampler::Cholesky(s) => s.sample_values(&mut rng),
        };
        FbmPath {
            model: *self.model(),
            grid: *self.grid(),
            values,
            seed: master_seed,
            method: self.method(),
        }
    }

    /// Applies `f` to paths `0..n_paths` and returns the results in path order.
    ///
    /// Every path draws from its own RNG stream, so the output does not depend on
    /// how rayon schedules the work.
    pub fn map_paths<T, F>(&self, master_seed: u64, n_paths: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&FbmPath) -> T + Sync,
    {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| f(&self.path(master_seed, i)))
            .collect()
    }
}

/// ChaCha20 generator for path `index`: key from `master_seed`, stream `index`.
pub fn path_rng(master_seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// One path from stream 0 of `seed`.
pub fn sample_path(model: &HurstModel, grid: &GridSpec, seed: u64, method: Method) -> Result<FbmPath> {
    Ok(Sampler::new(model, grid, method)?.path(seed, 0))
}

/// `n_paths` paths from streams `0..n_paths` of `master_seed`.
pub fn sample_ensemble(
    model: &HurstModel,
    grid: &GridSpec,
    master_seed: u64,
    method: Method,
    n_paths: usize,
) -> Result<Vec<FbmPath>> {
    let sampler = Sampler::new(model, grid, method)?;
    Ok(sampler.map_paths(master_seed, n_paths, |p| p.clone()))
}

/// Header shared by the path dump formats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub hurst: f64,
    pub horizon: f64,
    pub n: usize,
    pub master_seed: u64,
    pub method: Method,
    pub n_paths: usize,
}

impl DumpHeader {
    pub fn for_paths(paths: &[FbmPath]) -> Result<Self> {
        let first = paths.first().ok_or_else(|| Error::domain("no paths to dump"))?;
        Ok(Self {
            hurst: first.model.hurst(),
            horizon: first.grid.horizon(),
            n: first.grid.n(),
            master_seed: first.seed,
            method: first.method,
            n_paths: paths.len(),
        })
    }
}

pub const BINARY_MAGIC: &[u8; 8] = b"FBMPATH1";

/// CSV: one `#` header line with the run parameters, then one row per path.
pub fn write_csv(paths: &[FbmPath], out: &Path) -> Result<()> {
    let h = DumpHeader::for_paths(paths)?;
    let mut w = BufWriter::new(std::fs::File::create(out)?);
    writeln!(
        w,
        "# hurst={} horizon={} n={} master_seed={} method={} n_paths={}",
        h.hurst, h.horizon, h.n, h.master_seed, h.method, h.n_paths
    )?;
    for p in paths {
        let row: Vec<String> = p.values.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Little-endian binary: magic, `hurst: f64`, `horizon: f64`, `n: u64`,
/// `master_seed: u64`, `method: u8` (0 circulant, 1 cholesky), `n_paths: u64`,
/// then `n_paths * (n + 1)` values as `f64`.
pub fn write_binary(paths: &[FbmPath], out: &Path) -> Result<()> {
    let h = DumpHeader::for_paths(paths)?;
    let mut w = BufWriter::new(std::fs::File::create(out)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&h.hurst.to_le_bytes())?;
    w.write_all(&h.horizon.to_le_bytes())?;
    w.write_all(&(h.n as u64).to_le_bytes())?;
    w.write_all(&h.master_seed.to_le_bytes())?;
    w.write_all(&[match h.method {
        Method::Circulant => 0u8,
        Method::Cholesky => 1u8,
    }])?;
    w.write_all(&(h.n_paths as u64).to_le_bytes())?;
    for p in paths {
        for v in &p.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a file produced by [`write_binary`].
pub fn read_binary(input: &Path) -> Result<(DumpHeader, Vec<Vec<f64>>)> {
    let bytes = std::fs::read(input)?;
    let bad = || Error::Config(format!("{} is not a path dump", input.display()));
    if bytes.len() < 49 || &bytes[..8] != BINARY_MAGIC {
        return Err(bad());
    }
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let u = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let method = match bytes[40] {
        0 => Method::Circulant,
        1 => Method::Cholesky,
        _ => return Err(bad()),
    };
    let header = DumpHeader {
        hurst: f(8),
        horizon: f(16),
        n: u(24) as usize,
        master_seed: u(32),
        method,
        n_paths: u(41) as usize,
    };
    let width = header.n + 1;
    if bytes.len() != 49 + 8 * width * header.n_paths {
        return Err(bad());
    }
    let rows = (0..header.n_paths)
        .map(|i| (0..width).map(|k| f(49 + 8 * (i * width + k))).collect())
        .collect();
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(h: f64, n: usize) -> (HurstModel, GridSpec) {
        (HurstModel::new(h, 1.0).unwrap(), GridSpec::new(n, 1.0).unwrap())
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1, 1.0).is_err());
        assert!(GridSpec::new(4, 0.0).is_err());
        let g = GridSpec::new(4, 2.0).unwrap();
        assert_eq!(g.dt(), 0.5);
        assert_eq!(g.time(3), 1.5);
    }

    #[test]
    fn autocovariance_values() {
        let (bm, g) = setup(0.5, 8);
        assert!((fgn_autocovariance(&bm, &g, 0).unwrap() - g.dt()).abs() < 1e-15);
        for k in 1..=8 {
            assert!(fgn_autocovariance(&bm, &g, k).unwrap().abs() < 1e-15);
        }
        let m = HurstModel::new(0.7, 4.0).unwrap();
        let unit = GridSpec::new(4, 4.0).unwrap();
        let g1 = fgn_autocovariance(&m, &unit, 1).unwrap();
        assert!((g1 - 0.5 * (2f64.powf(1.4) - 2.0)).abs() < 1e-15);
        assert!((fgn_autocovariance(&m, &unit, 0).unwrap() - 1.0).abs() < 1e-15);
        assert!(fgn_autocovariance(&m, &unit, 5).is_err());
    }

    #[test]
    fn determinism_and_start_at_zero() {
        let (m, g) = setup(0.7, 64);
        for method in [Method::Circulant, Method::Cholesky] {
            let a = sample_path(&m, &g, 11, method).unwrap();
            let b = sample_path(&m, &g, 11, method).unwrap();
            assert_eq!(a.values, b.values);
            assert_eq!(a.values[0], 0.0);
            assert_eq!(a.values.len(), 65);
            let c = sample_path(&m, &g, 12, method).unwrap();
            assert_ne!(a.values, c.values);
        }
    }

    #[test]
    fn cholesky_cap() {
        let (m, _) = setup(0.7, 2);
        let g = GridSpec::new(64, 1.0).unwrap();
        assert!(matches!(CholeskySampler::with_cap(&m, &g, 32), Err(Error::Config(_))));
    }

    #[test]
    fn embedding_eigenvalues_nonnegative() {
        for &h in &[0.3, 0.5, 0.7, 0.9, 0.99] {
            let (m, g) = setup(h, 1000);
            assert!(CirculantSampler::new(&m, &g).is_ok(), "H = {h}");
        }
    }

    #[test]
    fn binary_roundtrip() {
        let (m, g) = setup(0.7, 16);
        let paths = sample_ensemble(&m, &g, 5, Method::Circulant, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("p.bin");
        write_binary(&paths, &file).unwrap();
        let (h, rows) = read_binary(&file).unwrap();
        assert_eq!(h.n, 16);
        assert_eq!(h.n_paths, 3);
        assert_eq!(h.method, Method::Circulant);
        assert_eq!(rows[2], paths[2].values);
        let csv = dir.path().join("p.csv");
        write_csv(&paths, &csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("# hurst=0.7 horizon=1 n=16 master_seed=5 method=circulant"));
        assert_eq!(text.lines().count(), 4);
    }
}
