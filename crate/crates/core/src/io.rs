//! Data ingestion and chain persistence.
//!
//! Curves arrive as long-format delimited text (`obs_id,t,y`), covariates as
//! one row per observation (`obs_id,x1,...,xR`). Chains persist as a
//! directory holding `manifest.json` plus an iteration-major little-endian
//! binary block; save and load are bit-exact inverses.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::BasisSpec;
use crate::chain::{AcceptanceStats, ChainSample, ChainStore, HierarchySample};
#[cfg(test)]
use crate::chain::Counter;
use crate::data::{Curve, FunctionalDataset};
use crate::error::{Error, Result};
use crate::model::{ModelDims, ParameterState};

const CHAIN_MAGIC: &[u8; 8] = b"CAFMMCH1";
pub const CHAIN_SCHEMA: &str = "cafmm-chain-v1";

/// Hex SHA-256 of arbitrary bytes; used to stamp manifests with the
/// effective configuration.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn parse_field<T: std::str::FromStr>(raw: &str, line: usize, what: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Ingestion {
        row: line,
        msg: format!("cannot parse {what} from '{raw}'"),
    })
}

/// Load a functional dataset from a long-format curves file and an optional
/// covariates file. Curve order follows first appearance in the curves
/// file; times are sorted within each curve. Every curve id must appear in
/// the covariates file when one is given.
pub fn load_dataset(curves_path: &Path, covariates_path: Option<&Path>) -> Result<FunctionalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(curves_path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", curves_path.display())))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Format(format!("bad curves header: {e}")))?;
        let expected = ["obs_id", "t", "y"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Format(format!(
                "curves file must have header obs_id,t,y (found {})",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut curves: HashMap<String, (Vec<f64>, Vec<f64>)> = HashMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.map_err(|e| Error::Ingestion {
            row: line,
            msg: format!("malformed record: {e}"),
        })?;
        if record.len() != 3 {
            return Err(Error::Ingestion {
                row: line,
                msg: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(Error::Ingestion {
                row: line,
                msg: "empty obs_id".into(),
            });
        }
        let t: f64 = parse_field(&record[1], line, "time")?;
        let y: f64 = parse_field(&record[2], line, "value")?;
        if !t.is_finite() || !y.is_finite() {
            return Err(Error::Ingestion {
                row: line,
                msg: "non-finite time or value".into(),
            });
        }
        let entry = curves.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            (Vec::new(), Vec::new())
        });
        entry.0.push(t);
        entry.1.push(y);
    }
    if order.is_empty() {
        return Err(Error::Format("curves file holds no observations".into()));
    }

    let design = match covariates_path {
        Some(path) => {
            let (ids, design) = load_covariates(path)?;
            let index: HashMap<&str, usize> = ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_str(), i))
                .collect();
            let mut rows = DMatrix::zeros(order.len(), design.ncols());
            for (i, id) in order.iter().enumerate() {
                let j = *index.get(id.as_str()).ok_or_else(|| {
                    Error::Format(format!("obs_id '{id}' missing from covariates file"))
                })?;
                rows.row_mut(i).copy_from(&design.row(j));
            }
            rows
        }
        None => DMatrix::zeros(order.len(), 0),
    };

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let (mut times, mut values) = curves.remove(&id).expect("id recorded during parse");
        // sort times, carrying values along
        let mut perm: Vec<usize> = (0..times.len()).collect();
        perm.sort_by(|a, b| times[*a].partial_cmp(&times[*b]).expect("finite times"));
        times = perm.iter().map(|p| times[*p]).collect();
        values = perm.iter().map(|p| values[*p]).collect();
        out.push(Curve {
            id,
            times,
            values: DVector::from_vec(values),
        });
    }
    FunctionalDataset::new(out, design)
}

fn load_covariates(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    let n_cols = {
        let headers = reader
            .headers()
            .map_err(|e| Error::Format(format!("bad covariates header: {e}")))?;
        if headers.is_empty() || &headers[0] != "obs_id" {
            return Err(Error::Format(
                "covariates file must start with an obs_id column".into(),
            ));
        }
        headers.len() - 1
    };
    let mut ids = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Ingestion {
            row: line,
            msg: format!("malformed record: {e}"),
        })?;
        if record.len() != n_cols + 1 {
            return Err(Error::Ingestion {
                row: line,
                msg: format!("expected {} fields, found {}", n_cols + 1, record.len()),
            });
        }
        ids.push(record[0].to_string());
        for c in 0..n_cols {
            values.push(parse_field(&record[c + 1], line, "covariate")?);
        }
    }
    let design = DMatrix::from_row_slice(ids.len(), n_cols, &values);
    Ok((ids, design))
}

/// Write a dataset as the pair of files `curves.csv` and `covariates.csv`
/// under `dir` (the covariates file is omitted when R = 0).
pub fn save_dataset(data: &FunctionalDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut curves = BufWriter::new(File::create(dir.join("curves.csv"))?);
    writeln!(curves, "obs_id,t,y")?;
    for c in &data.curves {
        for (t, y) in c.times.iter().zip(c.values.iter()) {
            writeln!(curves, "{},{},{}", c.id, t, y)?;
        }
    }
    curves.flush()?;
    if data.n_covariates() > 0 {
        let mut cov = BufWriter::new(File::create(dir.join("covariates.csv"))?);
        let header: Vec<String> = (1..=data.n_covariates()).map(|r| format!("x{r}")).collect();
        writeln!(cov, "obs_id,{}", header.join(","))?;
        for (i, c) in data.curves.iter().enumerate() {
            let row: Vec<String> = data.design.row(i).iter().map(|v| format!("{v}")).collect();
            writeln!(cov, "{},{}", c.id, row.join(","))?;
        }
        cov.flush()?;
    }
    Ok(())
}

/// Manifest stored beside the chain binary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainManifest {
    pub schema: String,
    pub dims: ModelDims,
    pub seed: u64,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_samples: usize,
    pub basis_spec: BasisSpec,
    pub store_hierarchy: bool,
    pub covariance_adjusted: bool,
    pub config_hash: String,
    pub accept: AcceptanceStats,
}

struct SampleLayout {
    hierarchy: bool,
    xi: bool,
}

fn write_vec<W: Write>(w: &mut W, v: &DVector<f64>) -> std::io::Result<()> {
    for x in v.iter() {
        w.write_f64::<LittleEndian>(*x)?;
    }
    Ok(())
}

fn write_mat<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    // column-major, matching nalgebra's storage order
    for x in m.iter() {
        w.write_f64::<LittleEndian>(*x)?;
    }
    Ok(())
}

fn read_vec<R: Read>(r: &mut R, len: usize) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(len);
    for i in 0..len {
        out[i] = r
            .read_f64::<LittleEndian>()
            .map_err(|_| Error::Format("chain binary truncated".into()))?;
    }
    Ok(out)
}

fn read_mat<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        for row in 0..rows {
            out[(row, c)] = r
                .read_f64::<LittleEndian>()
                .map_err(|_| Error::Format("chain binary truncated".into()))?;
        }
    }
    Ok(out)
}

fn write_sample<W: Write>(
    w: &mut W,
    s: &ChainSample,
    dims: &ModelDims,
    layout: &SampleLayout,
) -> Result<()> {
    for k in 0..dims.n_features {
        write_vec(w, &s.nu[k])?;
    }
    for k in 0..dims.n_features {
        write_mat(w, &s.eta[k])?;
    }
    for k in 0..dims.n_features {
        for m in 0..dims.n_components {
            write_vec(w, &s.phi[k][m])?;
        }
    }
    write_mat(w, &s.alloc)?;
    write_mat(w, &s.chi)?;
    write_vec(w, &s.pi)?;
    w.write_f64::<LittleEndian>(s.alpha3)?;
    w.write_f64::<LittleEndian>(s.sigma2)?;
    if layout.hierarchy {
        let h = s
            .hierarchy
            .as_ref()
            .ok_or_else(|| Error::Format("sample missing hierarchy promised by manifest".into()))?;
        write_mat(w, &h.delta)?;
        write_vec(w, &h.a1)?;
        write_vec(w, &h.a2)?;
        for k in 0..dims.n_features {
            for m in 0..dims.n_components {
                write_vec(w, &h.gamma[k][m])?;
            }
        }
        write_vec(w, &h.tau_nu)?;
        write_mat(w, &h.tau_eta)?;
    }
    if layout.xi {
        let xi = s
            .xi
            .as_ref()
            .ok_or_else(|| Error::Format("sample missing xi promised by manifest".into()))?;
        for k in 0..dims.n_features {
            for m in 0..dims.n_components {
                write_mat(w, &xi[k][m])?;
            }
        }
    }
    Ok(())
}

fn read_sample<R: Read>(r: &mut R, dims: &ModelDims, layout: &SampleLayout) -> Result<ChainSample> {
    let (k_feat, p, m_comp, r_cov, n) = (
        dims.n_features,
        dims.n_basis,
        dims.n_components,
        dims.n_covariates,
        dims.n_obs,
    );
    let mut nu = Vec::with_capacity(k_feat);
    for _ in 0..k_feat {
        nu.push(read_vec(r, p)?);
    }
    let mut eta = Vec::with_capacity(k_feat);
    for _ in 0..k_feat {
        eta.push(read_mat(r, p, r_cov)?);
    }
    let mut phi = Vec::with_capacity(k_feat);
    for _ in 0..k_feat {
        let mut fk = Vec::with_capacity(m_comp);
        for _ in 0..m_comp {
            fk.push(read_vec(r, p)?);
        }
        phi.push(fk);
    }
    let alloc = read_mat(r, n, k_feat)?;
    let chi = read_mat(r, n, m_comp)?;
    let pi = read_vec(r, k_feat)?;
    let alpha3 = r
        .read_f64::<LittleEndian>()
        .map_err(|_| Error::Format("chain binary truncated".into()))?;
    let sigma2 = r
        .read_f64::<LittleEndian>()
        .map_err(|_| Error::Format("chain binary truncated".into()))?;
    let hierarchy = if layout.hierarchy {
        let delta = read_mat(r, k_feat, m_comp)?;
        let a1 = read_vec(r, k_feat)?;
        let a2 = read_vec(r, k_feat)?;
        let mut gamma = Vec::with_capacity(k_feat);
        for _ in 0..k_feat {
            let mut gk = Vec::with_capacity(m_comp);
            for _ in 0..m_comp {
                gk.push(read_vec(r, p)?);
            }
            gamma.push(gk);
        }
        let tau_nu = read_vec(r, k_feat)?;
        let tau_eta = read_mat(r, k_feat, r_cov)?;
        Some(HierarchySample {
            delta,
            a1,
            a2,
            gamma,
            tau_nu,
            tau_eta,
        })
    } else {
        None
    };
    let xi = if layout.xi {
        let mut out = Vec::with_capacity(k_feat);
        for _ in 0..k_feat {
            let mut bk = Vec::with_capacity(m_comp);
            for _ in 0..m_comp {
                bk.push(read_mat(r, p, r_cov)?);
            }
            out.push(bk);
        }
        Some(out)
    } else {
        None
    };
    Ok(ChainSample {
        nu,
        eta,
        phi,
        alloc,
        chi,
        pi,
        alpha3,
        sigma2,
        hierarchy,
        xi,
    })
}

/// Persist a chain under `dir` as `manifest.json` + `chain.bin`.
pub fn save_chain(store: &ChainStore, dir: &Path, config_hash: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let layout = SampleLayout {
        hierarchy: store.samples.first().is_some_and(|s| s.hierarchy.is_some()),
        xi: store.samples.first().is_some_and(|s| s.xi.is_some()),
    };
    let manifest = ChainManifest {
        schema: CHAIN_SCHEMA.to_string(),
        dims: store.dims,
        seed: store.seed,
        n_iter: store.n_iter,
        burn_in: store.burn_in,
        thin: store.thin,
        n_samples: store.samples.len(),
        basis_spec: store.basis_spec.clone(),
        store_hierarchy: layout.hierarchy,
        covariance_adjusted: layout.xi,
        config_hash: config_hash.to_string(),
        accept: store.accept,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization failed: {e}")))?;
    fs::write(dir.join("manifest.json"), manifest_json)?;

    let mut w = BufWriter::new(File::create(dir.join("chain.bin"))?);
    w.write_all(CHAIN_MAGIC)?;
    for s in &store.samples {
        write_sample(&mut w, s, &store.dims, &layout)?;
    }
    for lp in &store.log_post_trace {
        w.write_f64::<LittleEndian>(*lp)?;
    }
    w.flush()?;
    Ok(())
}

/// Load a chain saved by [`save_chain`]. Errors on schema, dimension, or
/// truncation problems.
pub fn load_chain(dir: &Path) -> Result<(ChainStore, ChainManifest)> {
    let manifest_raw = fs::read_to_string(dir.join("manifest.json"))
        .map_err(|e| Error::Format(format!("cannot read manifest: {e}")))?;
    let manifest: ChainManifest = serde_json::from_str(&manifest_raw)
        .map_err(|e| Error::Format(format!("malformed manifest: {e}")))?;
    if manifest.schema != CHAIN_SCHEMA {
        return Err(Error::Format(format!(
            "unsupported chain schema '{}' (expected {CHAIN_SCHEMA})",
            manifest.schema
        )));
    }
    let mut r = BufReader::new(File::open(dir.join("chain.bin"))?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("chain binary truncated".into()))?;
    if &magic != CHAIN_MAGIC {
        return Err(Error::Format("chain binary has a wrong magic header".into()));
    }
    let layout = SampleLayout {
        hierarchy: manifest.store_hierarchy,
        xi: manifest.covariance_adjusted,
    };
    let mut samples = Vec::with_capacity(manifest.n_samples);
    for _ in 0..manifest.n_samples {
        samples.push(read_sample(&mut r, &manifest.dims, &layout)?);
    }
    let mut trace = Vec::with_capacity(manifest.n_iter);
    for _ in 0..manifest.n_iter {
        trace.push(
            r.read_f64::<LittleEndian>()
                .map_err(|_| Error::Format("chain binary truncated".into()))?,
        );
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::Format("chain binary has trailing bytes".into()));
    }
    let store = ChainStore {
        dims: manifest.dims,
        seed: manifest.seed,
        n_iter: manifest.n_iter,
        burn_in: manifest.burn_in,
        thin: manifest.thin,
        basis_spec: manifest.basis_spec.clone(),
        samples,
        log_post_trace: trace,
        accept: manifest.accept,
    };
    Ok((store, manifest))
}

/// Serializable mirror of a full parameter state; used to persist scenario
/// ground truths as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub nu: Vec<Vec<f64>>,
    /// Row-major P x R blocks per feature.
    pub eta: Vec<Vec<Vec<f64>>>,
    pub phi: Vec<Vec<Vec<f64>>>,
    /// Row-major N x M.
    pub chi: Vec<Vec<f64>>,
    /// Row-major N x K.
    pub alloc: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    pub alpha3: f64,
    pub sigma2: f64,
}

impl StateRecord {
    pub fn from_state(state: &ParameterState) -> Self {
        let mat_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| m.row(i).iter().cloned().collect())
                .collect()
        };
        StateRecord {
            nu: state.nu.iter().map(|v| v.iter().cloned().collect()).collect(),
            eta: state.eta.iter().map(mat_rows).collect(),
            phi: state
                .phi
                .iter()
                .map(|fk| fk.iter().map(|v| v.iter().cloned().collect()).collect())
                .collect(),
            chi: mat_rows(&state.chi),
            alloc: mat_rows(&state.alloc),
            pi: state.pi.iter().cloned().collect(),
            alpha3: state.alpha3,
            sigma2: state.sigma2,
        }
    }

    pub fn nu_vector(&self, k: usize) -> DVector<f64> {
        DVector::from_row_slice(&self.nu[k])
    }

    pub fn eta_matrix(&self, k: usize) -> DMatrix<f64> {
        let rows = self.eta[k].len();
        let cols = self.eta[k].first().map_or(0, Vec::len);
        DMatrix::from_fn(rows, cols, |i, j| self.eta[k][i][j])
    }

    pub fn alloc_matrix(&self) -> DMatrix<f64> {
        let rows = self.alloc.len();
        let cols = self.alloc.first().map_or(0, Vec::len);
        DMatrix::from_fn(rows, cols, |i, j| self.alloc[i][j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::testing::{random_state, small_dims};

    fn toy_store(seed: u64, hierarchy: bool, with_xi: bool) -> ChainStore {
        let dims = small_dims();
        let mut samples = Vec::new();
        for s in 0..3 {
            let state = if with_xi {
                crate::sampler::testing::random_state_with_xi(&dims, seed + s)
            } else {
                random_state(&dims, seed + s)
            };
            samples.push(ChainSample::from_state(&state, hierarchy));
        }
        ChainStore {
            dims,
            seed,
            n_iter: 10,
            burn_in: 4,
            thin: 2,
            basis_spec: BasisSpec::cubic(dims.n_basis, 0.0, 1.0),
            samples,
            log_post_trace: (0..10).map(|i| -(i as f64) * 1.5).collect(),
            accept: {
                let mut a = AcceptanceStats::default();
                a.alloc = Counter {
                    accepted: 3,
                    proposed: 10,
                };
                a
            },
        }
    }

    #[test]
    fn chain_roundtrip_is_exact() {
        for (hier, xi) in [(false, false), (true, false), (true, true)] {
            let dir = tempfile::tempdir().unwrap();
            let store = toy_store(40, hier, xi);
            save_chain(&store, dir.path(), "deadbeef").unwrap();
            let (loaded, manifest) = load_chain(dir.path()).unwrap();
            assert_eq!(loaded, store);
            assert_eq!(manifest.config_hash, "deadbeef");
        }
    }

    #[test]
    fn truncated_chain_errors() {
        let dir = tempfile::tempdir().unwrap();
        let store = toy_store(41, false, false);
        save_chain(&store, dir.path(), "x").unwrap();
        let path = dir.path().join("chain.bin");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_chain(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn dataset_roundtrip_through_csv() {
        let dims = small_dims();
        let (data, _) = crate::sampler::testing::random_dataset(&dims, 42);
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&data, dir.path()).unwrap();
        let loaded = load_dataset(
            &dir.path().join("curves.csv"),
            Some(&dir.path().join("covariates.csv")),
        )
        .unwrap();
        assert_eq!(loaded, data);
    }

    #[test]
    fn unmatched_obs_id_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = File::create(dir.path().join("curves.csv")).unwrap();
        writeln!(f, "obs_id,t,y\na,0.1,1.0\nb,0.2,2.0").unwrap();
        let mut g = File::create(dir.path().join("covariates.csv")).unwrap();
        writeln!(g, "obs_id,x1\na,0.5").unwrap();
        let err = load_dataset(
            &dir.path().join("curves.csv"),
            Some(&dir.path().join("covariates.csv")),
        );
        assert!(matches!(err, Err(Error::Format(_))));
    }

    #[test]
    fn non_numeric_field_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = File::create(dir.path().join("curves.csv")).unwrap();
        writeln!(f, "obs_id,t,y\na,0.1,1.0\na,bad,2.0").unwrap();
        match load_dataset(&dir.path().join("curves.csv"), None) {
            Err(Error::Ingestion { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn covariate_count_inferred_from_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = File::create(dir.path().join("curves.csv")).unwrap();
        writeln!(f, "obs_id,t,y\na,0.1,1.0\na,0.3,1.5").unwrap();
        let mut g = File::create(dir.path().join("covariates.csv")).unwrap();
        writeln!(g, "obs_id,x1,x2,x3\na,0.5,-1.0,2.5").unwrap();
        let data = load_dataset(
            &dir.path().join("curves.csv"),
            Some(&dir.path().join("covariates.csv")),
        )
        .unwrap();
        assert_eq!(data.n_covariates(), 3);
        assert_eq!(data.design[(0, 2)], 2.5);
    }

    #[test]
    fn times_are_sorted_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = File::create(dir.path().join("curves.csv")).unwrap();
        writeln!(f, "obs_id,t,y\na,0.9,9.0\na,0.1,1.0\na,0.5,5.0").unwrap();
        let data = load_dataset(&dir.path().join("curves.csv"), None).unwrap();
        assert_eq!(data.curves[0].times, vec![0.1, 0.5, 0.9]);
        assert_eq!(
            data.curves[0].values.iter().cloned().collect::<Vec<_>>(),
            vec![1.0, 5.0, 9.0]
        );
    }
}
