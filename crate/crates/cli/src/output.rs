//! Result files: JSON summaries, columnar CSV draws and a content-hashed
//! manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use subshrink_core::mcmc::ChainDiagnostics;
use subshrink_core::model::{PosteriorResult, TermSummary};
use subshrink_core::prior::kappa;

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub files: Vec<FileEntry>,
}

/// Collects files written into one directory and records their hashes.
pub struct OutputDir {
    dir: PathBuf,
    command: String,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path, command: &str) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::io(self.dir.join(name), e.into_error()))?;
        self.write(name, &bytes)
    }

    pub fn finish(self) -> CliResult<Manifest> {
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            files: self.files,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

/// Everything in a `PosteriorResult` except the draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub intercept: bool,
    pub constrained: bool,
    pub draws: usize,
    pub chains: usize,
    pub sigma2_mean: f64,
    pub rmse_to_observations: f64,
    pub rmse_to_truth: Option<f64>,
    /// Per-term scalars and pointwise bands.
    pub terms: Vec<TermSummary>,
    pub diagnostics: Vec<ChainDiagnostics>,
}

pub fn fit_summary(r: &PosteriorResult) -> FitSummary {
    FitSummary {
        intercept: r.intercept,
        constrained: r.constrained,
        draws: r.draws.len(),
        chains: r.diagnostics.len(),
        sigma2_mean: r.sigma2_mean,
        rmse_to_observations: r.rmse_to_observations,
        rmse_to_truth: r.rmse_to_truth,
        terms: r.terms.clone(),
        diagnostics: r.diagnostics.clone(),
    }
}

fn fmt(v: f64) -> String {
    // shortest round-trip representation
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// One row per retained draw: `chain, iteration, beta0, sigma2, xi`, then
/// `<term>.lambda, <term>.tau, <term>.kappa, <term>.beta_<j>` per term.
pub fn draws_csv(r: &PosteriorResult) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["chain", "iteration", "beta0", "sigma2", "xi"]
        .map(String::from)
        .to_vec();
    let first = &r.draws[0];
    for (t, s) in r.terms.iter().zip(&first.terms) {
        header.push(format!("{}.lambda", t.name));
        header.push(format!("{}.tau", t.name));
        header.push(format!("{}.kappa", t.name));
        header.extend((0..s.beta.len()).map(|j| format!("{}.beta_{}", t.name, j + 1)));
    }
    w.write_record(&header)?;
    for (d, chain) in r.draws.iter().zip(&r.chain_of_draw) {
        let mut row = vec![
            chain.to_string(),
            d.iteration.to_string(),
            fmt(d.beta0),
            fmt(d.sigma2),
            fmt_opt(d.xi),
        ];
        for s in &d.terms {
            row.push(fmt_opt(s.lambda));
            row.push(fmt(s.tau));
            row.push(fmt_opt(s.lambda.map(kappa)));
            row.extend(s.beta.iter().map(|&b| fmt(b)));
        }
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::io("draws.csv", e.into_error()))
}

/// Long-format curves: `term, x, mean, q05, q50, q95`.
pub fn curves_csv(r: &PosteriorResult) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["term", "x", "mean", "q05", "q50", "q95"])?;
    for t in &r.terms {
        for i in 0..t.grid.len() {
            w.write_record([
                t.name.clone(),
                fmt(t.grid[i]),
                fmt(t.mean[i]),
                fmt(t.q05[i]),
                fmt(t.q50[i]),
                fmt(t.q95[i]),
            ])?;
        }
    }
    w.into_inner().map_err(|e| CliError::io("curves.csv", e.into_error()))
}

/// Writes `summary.json`, `draws.csv` and `curves.csv` (both only when
/// there are draws) and `manifest.json` into `out`.
pub fn write_results(r: &PosteriorResult, out: &Path) -> CliResult<Manifest> {
    let mut dir = OutputDir::create(out, "fit")?;
    dir.write_json("summary.json", &fit_summary(r))?;
    if !r.draws.is_empty() {
        dir.write("draws.csv", &draws_csv(r)?)?;
        dir.write("curves.csv", &curves_csv(r)?)?;
    }
    dir.finish()
}

/// Posterior mean of `<term>.kappa` per term, read back from `draws.csv`.
pub fn kappa_means_from_draws(path: &Path) -> CliResult<Vec<(String, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_suffix(".kappa").map(|n| (i, n.to_string())))
        .collect();
    let mut sums = vec![(0.0, 0usize); cols.len()];
    for rec in rdr.records() {
        let rec = rec?;
        for (s, (i, name)) in sums.iter_mut().zip(&cols) {
            // empty for P-spline terms
            if rec[*i].is_empty() {
                continue;
            }
            let v: f64 = rec[*i].parse().map_err(|_| CliError::MalformedRow {
                path: path.to_path_buf(),
                line: rec.position().map_or(0, |p| p.line()),
                reason: format!("bad {name}.kappa value `{}`", &rec[*i]),
            })?;
            s.0 += v;
            s.1 += 1;
        }
    }
    Ok(cols
        .into_iter()
        .zip(sums)
        .filter(|(_, s)| s.1 > 0)
        .map(|((_, name), s)| (name, s.0 / s.1 as f64))
        .collect())
}

/// Verifies every manifest entry against the bytes on disk.
pub fn verify_manifest(dir: &Path) -> CliResult<Manifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    let m: Manifest = serde_json::from_slice(&text)?;
    for f in &m.files {
        let p = dir.join(&f.name);
        let bytes = std::fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        if hex::encode(Sha256::digest(&bytes)) != f.sha256 || bytes.len() as u64 != f.bytes {
            return Err(CliError::io(
                &p,
                std::io::Error::new(std::io::ErrorKind::InvalidData, "content does not match manifest"),
            ));
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_hashes_match() {
        let tmp = tempfile::tempdir().unwrap();
        let mut d = OutputDir::create(tmp.path(), "test").unwrap();
        d.write("a.txt", b"abc").unwrap();
        let m = d.finish().unwrap();
        assert_eq!(
            m.files[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        verify_manifest(tmp.path()).unwrap();
        std::fs::write(tmp.path().join("a.txt"), b"abd").unwrap();
        assert!(verify_manifest(tmp.path()).is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456789.123, -2.5e17] {
            assert_eq!(fmt(v).parse::<f64>().unwrap(), v);
        }
    }
}
