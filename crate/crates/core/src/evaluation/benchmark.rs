//! Database runs: manifest parsing, cached scoring, pooled logistic fit and
//! the CSV report.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::logistic::{fit_logistic5, LogisticParams, MIN_SAMPLES};
use crate::evaluation::stats::{plcc, rmse, srocc};
use crate::metric::{MetricConfig, PreparedReference};
use crate::pointcloud::load_ply;

// Bump whenever a change to the metric would alter cached scores.
const CACHE_VERSION: &str = "tcdm-score-cache-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestLine {
    reference: String,
    distorted: String,
    distortion_type: String,
    mos: f64,
}

/// One manifest row with paths resolved against the manifest directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub reference_id: String,
    pub distorted_id: String,
    pub distortion_type: String,
    pub mos: f64,
    pub reference_path: PathBuf,
    pub distorted_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub reference_id: String,
    pub distorted_id: String,
    pub distortion_type: String,
    pub mos: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub n: usize,
    /// On raw scores; rank statistics need no mapping.
    pub srocc: Option<f64>,
    /// On the pooled logistic mapping.
    pub plcc: Option<f64>,
    pub rmse: Option<f64>,
}

/// Statistics are `None` where undefined (too few samples or zero variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub n: usize,
    pub plcc: Option<f64>,
    pub srocc: Option<f64>,
    pub rmse: Option<f64>,
    /// Scores or MOS values have zero variance.
    pub degenerate: bool,
    pub logistic: Option<LogisticParams>,
    pub per_type: BTreeMap<String, TypeSummary>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest_err = |message: String| Error::Manifest {
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    let expected = ["reference", "distorted", "distortion_type", "mos"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(manifest_err(format!(
            "header must be `{}`, found `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.deserialize::<ManifestLine>().enumerate() {
        let line = line.map_err(|e| manifest_err(format!("row {}: {e}", i + 1)))?;
        if !line.mos.is_finite() {
            return Err(manifest_err(format!("row {}: MOS must be finite", i + 1)));
        }
        if !seen.insert((line.reference.clone(), line.distorted.clone())) {
            return Err(manifest_err(format!(
                "row {}: duplicate pair ({}, {})",
                i + 1,
                line.reference,
                line.distorted
            )));
        }
        rows.push(ManifestRow {
            reference_path: base.join(&line.reference),
            distorted_path: base.join(&line.distorted),
            reference_id: line.reference,
            distorted_id: line.distorted,
            distortion_type: line.distortion_type,
            mos: line.mos,
        });
    }
    if rows.is_empty() {
        return Err(manifest_err("manifest has no rows".into()));
    }
    Ok(rows)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of every setting that can change a score.
pub fn config_hash(config: &MetricConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    sha256_hex(format!("{CACHE_VERSION}\n{json}").as_bytes())
}

/// Scores keyed by (reference content, distorted content, config), stored as
/// tab-separated lines.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ScoreCache {
    entries: HashMap<(String, String, String), f64>,
}

impl ScoreCache {
    /// Missing files give an empty cache; malformed lines are dropped.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cache = ScoreCache::default();
        let file = match fs::File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(cache),
            Err(e) => return Err(Error::io(path, e)),
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                [r, d, c, q] => match q.parse::<f64>() {
                    Ok(q) if q.is_finite() => {
                        cache.entries.insert((r.to_string(), d.to_string(), c.to_string()), q);
                    }
                    _ => log::warn!("{}:{}: unreadable cached score", path.display(), i + 1),
                },
                _ => log::warn!("{}:{}: malformed cache line", path.display(), i + 1),
            }
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut keys: Vec<_> = self.entries.keys().collect();
        keys.sort();
        let mut out = String::new();
        for key in keys {
            let q = self.entries[key];
            out.push_str(&format!("{}\t{}\t{}\t{q:?}\n", key.0, key.1, key.2));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn get(&self, reference: &str, distorted: &str, config: &str) -> Option<f64> {
        self.entries
            .get(&(reference.to_string(), distorted.to_string(), config.to_string()))
            .copied()
    }

    pub fn insert(&mut self, reference: &str, distorted: &str, config: &str, q: f64) {
        self.entries
            .insert((reference.to_string(), distorted.to_string(), config.to_string()), q);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The cache file used for a report at `report`.
pub fn cache_path(report: &Path) -> PathBuf {
    let mut name = report.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".cache");
    report.with_file_name(name)
}

fn has_spread(v: &[f64]) -> bool {
    v.iter().any(|&x| x != v[0])
}

/// Pooled logistic fit plus global and per-type statistics. Returns the
/// summary and the mapped score of every record (`None` without a fit).
pub fn summarize(records: &[ScoredRecord]) -> (CorrelationSummary, Vec<Option<f64>>) {
    let q: Vec<f64> = records.iter().map(|r| r.q).collect();
    let mos: Vec<f64> = records.iter().map(|r| r.mos).collect();
    let n = records.len();
    let degenerate = n < 2 || !has_spread(&q) || !has_spread(&mos);
    let mut summary = CorrelationSummary {
        n,
        plcc: None,
        srocc: None,
        rmse: None,
        degenerate,
        logistic: None,
        per_type: BTreeMap::new(),
    };
    let mut mapped = vec![None; n];
    if !degenerate {
        summary.srocc = srocc(&q, &mos).ok();
        if n >= MIN_SAMPLES {
            match fit_logistic5(&q, &mos) {
                Ok(fit) => {
                    summary.plcc = plcc(&fit.mapped, &mos).ok();
                    summary.rmse = rmse(&fit.mapped, &mos).ok();
                    summary.logistic = Some(fit.params);
                    mapped = fit.mapped.into_iter().map(Some).collect();
                }
                Err(e) => log::warn!("logistic fit failed: {e}"),
            }
        } else {
            summary.plcc = plcc(&q, &mos).ok();
        }
    }

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.distortion_type.as_str()).or_default().push(i);
    }
    for (kind, idx) in groups {
        let gq: Vec<f64> = idx.iter().map(|&i| q[i]).collect();
        let gm: Vec<f64> = idx.iter().map(|&i| mos[i]).collect();
        let gmap: Option<Vec<f64>> = idx.iter().map(|&i| mapped[i]).collect();
        let spread = gq.len() >= 2 && has_spread(&gq) && has_spread(&gm);
        let t = TypeSummary {
            n: idx.len(),
            srocc: if spread { srocc(&gq, &gm).ok() } else { None },
            plcc: gmap.as_ref().filter(|_| spread).and_then(|m| plcc(m, &gm).ok()),
            rmse: gmap.as_ref().and_then(|m| rmse(m, &gm).ok()),
        };
        summary.per_type.insert(kind.to_string(), t);
    }
    (summary, mapped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub summary: CorrelationSummary,
    /// Scored rows in manifest order; skipped rows are absent.
    pub records: Vec<ScoredRecord>,
    pub mapped: Vec<Option<f64>>,
    pub cache_hits: usize,
    pub computed: usize,
    pub skipped: usize,
}

/// Scores every manifest row, reusing cached scores, then writes the report
/// to `out` and the cache next to it. Unreadable or unscorable rows are
/// skipped with a warning.
pub fn run_benchmark(manifest: &Path, config: &MetricConfig, out: &Path) -> Result<BenchmarkRun> {
    config.validate()?;
    let rows = read_manifest(manifest)?;
    let cache_file = cache_path(out);
    let mut cache = ScoreCache::load(&cache_file)?;
    let chash = config_hash(config);

    let mut hashes: HashMap<&Path, Option<String>> = HashMap::new();
    for row in &rows {
        for p in [row.reference_path.as_path(), row.distorted_path.as_path()] {
            hashes.entry(p).or_insert_with(|| match file_hash(p) {
                Ok(h) => Some(h),
                Err(e) => {
                    log::warn!("skipping rows using {}: {e}", p.display());
                    None
                }
            });
        }
    }
    let key = |row: &ManifestRow| -> Option<(String, String)> {
        Some((
            hashes[row.reference_path.as_path()].clone()?,
            hashes[row.distorted_path.as_path()].clone()?,
        ))
    };

    let mut scores: Vec<Option<f64>> = vec![None; rows.len()];
    let mut pending: BTreeMap<&Path, Vec<usize>> = BTreeMap::new();
    let mut cache_hits = 0;
    for (i, row) in rows.iter().enumerate() {
        let Some((rh, dh)) = key(row) else { continue };
        if let Some(q) = cache.get(&rh, &dh, &chash) {
            scores[i] = Some(q);
            cache_hits += 1;
        } else {
            pending.entry(row.reference_path.as_path()).or_default().push(i);
        }
    }

    let mut computed = 0;
    for (reference_path, idx) in pending {
        let prepared = load_ply(reference_path).and_then(|cloud| PreparedReference::new(&cloud, config));
        let prepared = match prepared {
            Ok(p) => p,
            Err(e) => {
                log::warn!("skipping {} rows of {}: {e}", idx.len(), reference_path.display());
                continue;
            }
        };
        let results: Vec<(usize, Result<f64>)> = idx
            .par_iter()
            .map(|&i| {
                let q = load_ply(&rows[i].distorted_path)
                    .and_then(|cloud| prepared.score(&cloud))
                    .map(|r| r.q);
                (i, q)
            })
            .collect();
        for (i, q) in results {
            match q {
                Ok(q) => {
                    let (rh, dh) = key(&rows[i]).expect("pending rows are hashed");
                    cache.insert(&rh, &dh, &chash, q);
                    scores[i] = Some(q);
                    computed += 1;
                }
                Err(e) => log::warn!("skipping {}: {e}", rows[i].distorted_path.display()),
            }
        }
    }
    if computed > 0 {
        cache.save(&cache_file)?;
    }

    let records: Vec<ScoredRecord> = rows
        .iter()
        .zip(&scores)
        .filter_map(|(row, q)| {
            q.map(|q| ScoredRecord {
                reference_id: row.reference_id.clone(),
                distorted_id: row.distorted_id.clone(),
                distortion_type: row.distortion_type.clone(),
                mos: row.mos,
                q,
            })
        })
        .collect();
    let skipped = rows.len() - records.len();
    log::info!("{computed} pairs scored, {cache_hits} cache hits, {skipped} skipped");
    if records.is_empty() {
        return Err(Error::Manifest {
            path: manifest.to_path_buf(),
            message: "no row could be scored".into(),
        });
    }
    let (summary, mapped) = summarize(&records);
    write_report(out, &records, &mapped, &summary)?;
    Ok(BenchmarkRun {
        summary,
        records,
        mapped,
        cache_hits,
        computed,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportLine {
    reference: String,
    distorted: String,
    distortion_type: String,
    mos: f64,
    q: f64,
    mapped_q: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Data rows, then a `#`-prefixed summary block that CSV readers with
/// comment support skip.
pub fn write_report(
    path: &Path,
    records: &[ScoredRecord],
    mapped: &[Option<f64>],
    summary: &CorrelationSummary,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for (r, m) in records.iter().zip(mapped) {
        writer.serialize(ReportLine {
            reference: r.reference_id.clone(),
            distorted: r.distorted_id.clone(),
            distortion_type: r.distortion_type.clone(),
            mos: r.mos,
            q: r.q,
            mapped_q: *m,
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    drop(writer);

    let mut file = fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut block = String::from("# scope,n,plcc,srocc,rmse\n");
    block.push_str(&format!(
        "# all,{},{},{},{}\n",
        summary.n,
        fmt_opt(summary.plcc),
        fmt_opt(summary.srocc),
        fmt_opt(summary.rmse)
    ));
    for (kind, t) in &summary.per_type {
        block.push_str(&format!(
            "# type:{kind},{},{},{},{}\n",
            t.n,
            fmt_opt(t.plcc),
            fmt_opt(t.srocc),
            fmt_opt(t.rmse)
        ));
    }
    if summary.degenerate {
        block.push_str("# degenerate: zero variance in scores or MOS\n");
    }
    file.write_all(block.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads the data rows of a report written by [`write_report`].
pub fn read_report(path: &Path) -> Result<Vec<(ScoredRecord, Option<f64>)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let mut out = Vec::new();
    for line in reader.deserialize::<ReportLine>() {
        let line = line?;
        out.push((
            ScoredRecord {
                reference_id: line.reference,
                distorted_id: line.distorted,
                distortion_type: line.distortion_type,
                mos: line.mos,
                q: line.q,
            },
            line.mapped_q,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(kind: &str, mos: f64, q: f64) -> ScoredRecord {
        ScoredRecord {
            reference_id: "r.ply".into(),
            distorted_id: format!("d{mos}.ply"),
            distortion_type: kind.into(),
            mos,
            q,
        }
    }

    #[test]
    fn constant_scores_are_degenerate() {
        let records: Vec<_> = (0..3).map(|i| rec("x", i as f64, 0.7)).collect();
        let (s, mapped) = summarize(&records);
        assert!(s.degenerate);
        assert_eq!((s.plcc, s.srocc, s.rmse), (None, None, None));
        assert!(mapped.iter().all(Option::is_none));
    }

    #[test]
    fn per_type_srocc_uses_raw_scores() {
        let mut records = Vec::new();
        for i in 0..4 {
            records.push(rec("a", i as f64, 0.1 * i as f64));
            records.push(rec("b", i as f64, 1.0 - 0.1 * i as f64));
        }
        let (s, mapped) = summarize(&records);
        assert_eq!(s.per_type["a"].srocc, Some(1.0));
        assert_eq!(s.per_type["b"].srocc, Some(-1.0));
        assert_eq!(s.per_type["a"].n, 4);
        assert!(mapped.iter().all(Option::is_some));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cache");
        let mut c = ScoreCache::default();
        c.insert("a", "b", "c", 0.123_456_789_012_345_67);
        c.insert("a", "d", "c", 1.0 / 3.0);
        c.save(&path).unwrap();
        let back = ScoreCache::load(&path).unwrap();
        assert_eq!(back, c);
        assert!(ScoreCache::load(&dir.path().join("missing")).unwrap().is_empty());
    }

    #[test]
    fn config_hash_tracks_settings() {
        let a = MetricConfig::default();
        let b = MetricConfig { seeds: 200, ..a };
        assert_eq!(config_hash(&a), config_hash(&a));
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn manifest_header_and_duplicates_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "ref,dist,type,mos\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Manifest { .. })));
        fs::write(&path, "reference,distorted,distortion_type,mos\n").unwrap();
        assert!(read_manifest(&path).is_err());
        fs::write(
            &path,
            "reference,distorted,distortion_type,mos\na.ply,b.ply,ggn,3\na.ply,b.ply,ggn,4\n",
        )
        .unwrap();
        assert!(read_manifest(&path).is_err());
        fs::write(
            &path,
            "reference,distorted,distortion_type,mos\na.ply,sub/b.ply,ggn,3.5\n",
        )
        .unwrap();
        let rows = read_manifest(&path).unwrap();
        assert_eq!(rows[0].distorted_path, dir.path().join("sub/b.ply"));
        assert_eq!(rows[0].mos, 3.5);
    }

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let records: Vec<_> = (0..7).map(|i| rec("t", i as f64, 0.1 * i as f64 + 0.01)).collect();
        let (s, mapped) = summarize(&records);
        write_report(&path, &records, &mapped, &s).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("reference,distorted,distortion_type,mos,q,mapped_q\n"));
        assert!(text.contains("# all,7,"));
        let back = read_report(&path).unwrap();
        assert_eq!(back.len(), 7);
        assert_eq!(back[3].0, records[3]);
        assert_eq!(back[3].1, mapped[3]);
    }
}
