//! Dataset files.
//!
//! Every data type lives in its own comma-separated file with a fixed header:
//!
//! | file | columns |
//! |------|---------|
//! | catch | `fishery,year,effort,catch` (empty catch = missing) |
//! | spawners | `stock,year,count,cv` |
//! | tag_releases | `cohort,release_year,released,label` |
//! | tag_recoveries | `cohort,fishery,year,recovered` |
//! | reared | `year,releases` |
//! | smolt_trap | `river,year,marked,captured,recaptured` |
//! | electrofishing | `river,year,site,density,area` |
//! | rivers | `river,habitat_area` |
//! | m74 | `year,families,m74_families` |
//! | external_sr | `stock,eggs,recruits` |
//! | expert_pspc | `stock,prob,value` |
//! | smolt_draws | `river,year,value` |
//! | smolt_approx | `stock,year,mu,sd` |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::observation::{
    CatchEffortRecord, ReleaseType, SmoltLikelihoodApprox, SpawnerCount, TagCohort, TagRecovery,
};
use crate::priors::{ExpertQuantiles, ExternalSrDataset, M74Observation};
use crate::river::{ElectrofishingRecord, RiverInfo, SmoltPosterior};

pub const CATCH_HEADER: &[&str] = &["fishery", "year", "effort", "catch"];
pub const SPAWNER_HEADER: &[&str] = &["stock", "year", "count", "cv"];
pub const TAG_RELEASE_HEADER: &[&str] = &["cohort", "release_year", "released", "label"];
pub const TAG_RECOVERY_HEADER: &[&str] = &["cohort", "fishery", "year", "recovered"];
pub const REARED_HEADER: &[&str] = &["year", "releases"];
pub const SMOLT_TRAP_HEADER: &[&str] = &["river", "year", "marked", "captured", "recaptured"];
pub const ELECTROFISHING_HEADER: &[&str] = &["river", "year", "site", "density", "area"];
pub const RIVERS_HEADER: &[&str] = &["river", "habitat_area"];
pub const M74_HEADER: &[&str] = &["year", "families", "m74_families"];
pub const EXTERNAL_SR_HEADER: &[&str] = &["stock", "eggs", "recruits"];
pub const EXPERT_PSPC_HEADER: &[&str] = &["stock", "prob", "value"];
pub const SMOLT_DRAWS_HEADER: &[&str] = &["river", "year", "value"];
pub const SMOLT_APPROX_HEADER: &[&str] = &["stock", "year", "mu", "sd"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagReleaseRow {
    pub cohort: String,
    pub release_year: i32,
    pub released: u64,
    pub label: ReleaseType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagRecoveryRow {
    pub cohort: String,
    pub fishery: String,
    pub year: i32,
    pub recovered: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RearedRow {
    pub year: i32,
    pub releases: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoltTrapRow {
    pub river: String,
    pub year: i32,
    pub marked: u64,
    pub captured: u64,
    pub recaptured: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSrRow {
    pub stock: String,
    pub eggs: f64,
    pub recruits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertPspcRow {
    pub stock: String,
    pub prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoltDrawRow {
    pub river: String,
    pub year: i32,
    pub value: f64,
}

/// Reads a CSV file whose header must equal `header` exactly.
pub fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(Error::parse(
            path,
            format!("expected columns [{}], found [{}]", header.join(","), found.join(",")),
        ));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(path, format!("row {}: {e}", i + 2))))
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

/// File names of each data type, relative to a data directory. `None` means
/// the data type is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataFiles {
    pub catch: Option<String>,
    pub spawners: Option<String>,
    pub tag_releases: Option<String>,
    pub tag_recoveries: Option<String>,
    pub reared: Option<String>,
    pub smolt_trap: Option<String>,
    pub electrofishing: Option<String>,
    pub rivers: Option<String>,
    pub m74: Option<String>,
    pub external_sr: Option<String>,
    pub expert_pspc: Option<String>,
}

impl Default for DataFiles {
    fn default() -> Self {
        let s = |n: &str| Some(format!("{n}.csv"));
        Self {
            catch: s("catch"),
            spawners: s("spawners"),
            tag_releases: s("tag_releases"),
            tag_recoveries: s("tag_recoveries"),
            reared: s("reared"),
            smolt_trap: s("smolt_trap"),
            electrofishing: s("electrofishing"),
            rivers: s("rivers"),
            m74: s("m74"),
            external_sr: s("external_sr"),
            expert_pspc: s("expert_pspc"),
        }
    }
}

impl DataFiles {
    /// `(kind, file name)` of every configured file.
    pub fn entries(&self) -> Vec<(&'static str, &str)> {
        [
            ("catch", &self.catch),
            ("spawners", &self.spawners),
            ("tag_releases", &self.tag_releases),
            ("tag_recoveries", &self.tag_recoveries),
            ("reared", &self.reared),
            ("smolt_trap", &self.smolt_trap),
            ("electrofishing", &self.electrofishing),
            ("rivers", &self.rivers),
            ("m74", &self.m74),
            ("external_sr", &self.external_sr),
            ("expert_pspc", &self.expert_pspc),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

/// All observed series of an assessment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub catch: Vec<CatchEffortRecord>,
    pub spawners: Vec<SpawnerCount>,
    pub tags: Vec<TagCohort>,
    pub reared: Vec<RearedRow>,
    pub smolt_trap: Vec<SmoltTrapRow>,
    pub electrofishing: Vec<ElectrofishingRecord>,
    pub rivers: Vec<RiverInfo>,
    pub m74: Vec<M74Observation>,
    pub external_sr: Vec<ExternalSrDataset>,
    pub expert_pspc: Vec<ExpertQuantiles>,
}

fn optional<T: DeserializeOwned>(dir: &Path, name: Option<&str>, header: &[&str]) -> Result<Vec<T>> {
    match name {
        Some(n) => {
            let path = dir.join(n);
            if path.exists() {
                read_csv(&path, header)
            } else {
                Ok(Vec::new())
            }
        }
        None => Ok(Vec::new()),
    }
}

impl Dataset {
    /// Loads every configured file; files that do not exist are treated as empty,
    /// except the catch series which is required.
    pub fn load(dir: &Path, files: &DataFiles) -> Result<Self> {
        let catch_name = files
            .catch
            .as_deref()
            .ok_or_else(|| Error::Validation("a catch file is required".into()))?;
        let catch: Vec<CatchEffortRecord> = read_csv(&dir.join(catch_name), CATCH_HEADER)?;
        let releases: Vec<TagReleaseRow> =
            optional(dir, files.tag_releases.as_deref(), TAG_RELEASE_HEADER)?;
        let recoveries: Vec<TagRecoveryRow> =
            optional(dir, files.tag_recoveries.as_deref(), TAG_RECOVERY_HEADER)?;
        let sr_rows: Vec<ExternalSrRow> = optional(dir, files.external_sr.as_deref(), EXTERNAL_SR_HEADER)?;
        let expert_rows: Vec<ExpertPspcRow> =
            optional(dir, files.expert_pspc.as_deref(), EXPERT_PSPC_HEADER)?;
        let ds = Dataset {
            catch,
            spawners: optional(dir, files.spawners.as_deref(), SPAWNER_HEADER)?,
            tags: assemble_tags(&releases, &recoveries)?,
            reared: optional(dir, files.reared.as_deref(), REARED_HEADER)?,
            smolt_trap: optional(dir, files.smolt_trap.as_deref(), SMOLT_TRAP_HEADER)?,
            electrofishing: optional(dir, files.electrofishing.as_deref(), ELECTROFISHING_HEADER)?,
            rivers: optional(dir, files.rivers.as_deref(), RIVERS_HEADER)?,
            m74: optional(dir, files.m74.as_deref(), M74_HEADER)?,
            external_sr: group_external_sr(&sr_rows),
            expert_pspc: group_expert(&expert_rows),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.catch {
            ensure!(
                c.effort.is_finite() && c.effort >= 0.0,
                Validation,
                "catch {} {}: effort must be nonnegative",
                c.fishery,
                c.year
            );
            if let Some(v) = c.catch {
                ensure!(v >= 0.0, Validation, "catch {} {}: catch must be nonnegative", c.fishery, c.year);
            }
        }
        for s in &self.spawners {
            ensure!(s.count >= 0.0, Validation, "spawners {} {}: negative count", s.stock, s.year);
            ensure!(s.cv > 0.0, Validation, "spawners {} {}: cv must be positive", s.stock, s.year);
        }
        for t in &self.tags {
            t.validate()?;
        }
        for t in &self.smolt_trap {
            ensure!(
                t.recaptured <= t.marked.min(t.captured),
                Validation,
                "smolt trap {} {}: recaptures exceed min(marked, captured)",
                t.river,
                t.year
            );
        }
        for e in &self.electrofishing {
            ensure!(
                e.density >= 0.0 && e.area > 0.0,
                Validation,
                "electrofishing {} {} {}: bad density or area",
                e.river,
                e.year,
                e.site
            );
        }
        for m in &self.m74 {
            ensure!(
                m.m74_families <= m.families,
                Validation,
                "m74 {}: affected families exceed monitored",
                m.year
            );
        }
        for d in &self.external_sr {
            ensure!(
                d.eggs.iter().chain(&d.recruits).all(|v| *v > 0.0),
                Validation,
                "external stock {}: values must be positive",
                d.stock
            );
        }
        for q in &self.expert_pspc {
            q.validate()?;
        }
        Ok(())
    }

    /// Writes each non-empty data type under its default file name; returns the
    /// written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        let mut put = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
            let p = dir.join(name);
            f(&p)?;
            out.push(p);
            Ok(())
        };
        put("catch.csv", &|p| write_csv(p, CATCH_HEADER, &self.catch))?;
        if !self.spawners.is_empty() {
            put("spawners.csv", &|p| write_csv(p, SPAWNER_HEADER, &self.spawners))?;
        }
        if !self.tags.is_empty() {
            let (rel, rec) = split_tags(&self.tags);
            put("tag_releases.csv", &|p| write_csv(p, TAG_RELEASE_HEADER, &rel))?;
            put("tag_recoveries.csv", &|p| write_csv(p, TAG_RECOVERY_HEADER, &rec))?;
        }
        if !self.reared.is_empty() {
            put("reared.csv", &|p| write_csv(p, REARED_HEADER, &self.reared))?;
        }
        if !self.smolt_trap.is_empty() {
            put("smolt_trap.csv", &|p| write_csv(p, SMOLT_TRAP_HEADER, &self.smolt_trap))?;
        }
        if !self.electrofishing.is_empty() {
            put("electrofishing.csv", &|p| write_csv(p, ELECTROFISHING_HEADER, &self.electrofishing))?;
        }
        if !self.rivers.is_empty() {
            put("rivers.csv", &|p| write_csv(p, RIVERS_HEADER, &self.rivers))?;
        }
        if !self.m74.is_empty() {
            put("m74.csv", &|p| write_csv(p, M74_HEADER, &self.m74))?;
        }
        if !self.external_sr.is_empty() {
            let rows: Vec<ExternalSrRow> = self
                .external_sr
                .iter()
                .flat_map(|d| {
                    d.eggs.iter().zip(&d.recruits).map(|(e, r)| ExternalSrRow {
                        stock: d.stock.clone(),
                        eggs: *e,
                        recruits: *r,
                    })
                })
                .collect();
            put("external_sr.csv", &|p| write_csv(p, EXTERNAL_SR_HEADER, &rows))?;
        }
        if !self.expert_pspc.is_empty() {
            let rows: Vec<ExpertPspcRow> = self
                .expert_pspc
                .iter()
                .flat_map(|q| {
                    q.pairs.iter().map(|(p, v)| ExpertPspcRow {
                        stock: q.stock.clone(),
                        prob: *p,
                        value: *v,
                    })
                })
                .collect();
            put("expert_pspc.csv", &|p| write_csv(p, EXPERT_PSPC_HEADER, &rows))?;
        }
        Ok(out)
    }
}

fn assemble_tags(releases: &[TagReleaseRow], recoveries: &[TagRecoveryRow]) -> Result<Vec<TagCohort>> {
    let mut cohorts: Vec<TagCohort> = releases
        .iter()
        .map(|r| TagCohort {
            id: r.cohort.clone(),
            release_year: r.release_year,
            released: r.released,
            label: r.label,
            recoveries: Vec::new(),
        })
        .collect();
    for rec in recoveries {
        let c = cohorts
            .iter_mut()
            .find(|c| c.id == rec.cohort)
            .ok_or_else(|| Error::Validation(format!("recovery of unknown tag cohort {}", rec.cohort)))?;
        c.recoveries.push(TagRecovery {
            fishery: rec.fishery.clone(),
            year: rec.year,
            count: rec.recovered,
        });
    }
    Ok(cohorts)
}

fn split_tags(tags: &[TagCohort]) -> (Vec<TagReleaseRow>, Vec<TagRecoveryRow>) {
    let rel = tags
        .iter()
        .map(|c| TagReleaseRow {
            cohort: c.id.clone(),
            release_year: c.release_year,
            released: c.released,
            label: c.label,
        })
        .collect();
    let rec = tags
        .iter()
        .flat_map(|c| {
            c.recoveries.iter().map(|r| TagRecoveryRow {
                cohort: c.id.clone(),
                fishery: r.fishery.clone(),
                year: r.year,
                recovered: r.count,
            })
        })
        .collect();
    (rel, rec)
}

fn group_external_sr(rows: &[ExternalSrRow]) -> Vec<ExternalSrDataset> {
    let mut by: BTreeMap<&str, ExternalSrDataset> = BTreeMap::new();
    for r in rows {
        let d = by.entry(&r.stock).or_insert_with(|| ExternalSrDataset {
            stock: r.stock.clone(),
            eggs: Vec::new(),
            recruits: Vec::new(),
        });
        d.eggs.push(r.eggs);
        d.recruits.push(r.recruits);
    }
    by.into_values().collect()
}

fn group_expert(rows: &[ExpertPspcRow]) -> Vec<ExpertQuantiles> {
    let mut by: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        by.entry(&r.stock).or_default().push((r.prob, r.value));
    }
    by.into_iter()
        .map(|(s, mut pairs)| {
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            ExpertQuantiles {
                stock: s.to_string(),
                pairs,
            }
        })
        .collect()
}

pub fn write_smolt_draws(path: &Path, posteriors: &[SmoltPosterior]) -> Result<()> {
    let rows: Vec<SmoltDrawRow> = posteriors
        .iter()
        .flat_map(|p| {
            p.draws.iter().map(|v| SmoltDrawRow {
                river: p.river.clone(),
                year: p.year,
                value: *v,
            })
        })
        .collect();
    write_csv(path, SMOLT_DRAWS_HEADER, &rows)
}

/// Groups draw rows back into posteriors, ordered by river then year.
pub fn read_smolt_draws(path: &Path) -> Result<Vec<SmoltPosterior>> {
    let rows: Vec<SmoltDrawRow> = read_csv(path, SMOLT_DRAWS_HEADER)?;
    let mut by: BTreeMap<(String, i32), Vec<f64>> = BTreeMap::new();
    for r in rows {
        by.entry((r.river, r.year)).or_default().push(r.value);
    }
    Ok(by
        .into_iter()
        .map(|((river, year), draws)| SmoltPosterior { river, year, draws })
        .collect())
}

pub fn write_smolt_approx(path: &Path, approx: &[SmoltLikelihoodApprox]) -> Result<()> {
    write_csv(path, SMOLT_APPROX_HEADER, approx)
}

pub fn read_smolt_approx(path: &Path) -> Result<Vec<SmoltLikelihoodApprox>> {
    read_csv(path, SMOLT_APPROX_HEADER)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        Dataset {
            catch: vec![
                CatchEffortRecord { fishery: "sea".into(), year: 2000, effort: 10.0, catch: Some(5.0) },
                CatchEffortRecord { fishery: "sea".into(), year: 2001, effort: 12.0, catch: None },
            ],
            spawners: vec![SpawnerCount { stock: "a".into(), year: 2000, count: 100.0, cv: 0.2 }],
            tags: vec![TagCohort {
                id: "c1".into(),
                release_year: 2000,
                released: 1000,
                label: ReleaseType::Wild,
                recoveries: vec![TagRecovery { fishery: "sea".into(), year: 2001, count: 7 }],
            }],
            reared: vec![RearedRow { year: 2000, releases: 5000.0 }],
            m74: vec![M74Observation { year: 2000, families: 10, m74_families: 2 }],
            expert_pspc: vec![ExpertQuantiles { stock: "a".into(), pairs: vec![(0.05, 10.0), (0.5, 20.0), (0.95, 40.0)] }],
            external_sr: vec![ExternalSrDataset { stock: "x".into(), eggs: vec![1.0, 2.0], recruits: vec![0.5, 0.7] }],
            ..Dataset::default()
        }
    }

    #[test]
    fn round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample();
        ds.write(dir.path()).unwrap();
        let back = Dataset::load(dir.path(), &DataFiles::default()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn header_mismatch_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("catch.csv"), "fishery,year,catch\nsea,2000,4\n").unwrap();
        let err = Dataset::load(dir.path(), &DataFiles::default()).unwrap_err();
        assert_eq!(err.code(), "E_PARSE");
    }

    #[test]
    fn invalid_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("catch.csv"), "fishery,year,effort,catch\nsea,2000,-1,4\n").unwrap();
        let err = Dataset::load(dir.path(), &DataFiles::default()).unwrap_err();
        assert_eq!(err.code(), "E_VALIDATION");
        assert_eq!(Dataset::load(&dir.path().join("nope"), &DataFiles::default()).unwrap_err().code(), "E_IO");
    }

    #[test]
    fn smolt_draw_files_group_by_river_year() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let posts = vec![
            SmoltPosterior { river: "a".into(), year: 1, draws: vec![1.0, 2.0] },
            SmoltPosterior { river: "b".into(), year: 1, draws: vec![3.0] },
        ];
        write_smolt_draws(&p, &posts).unwrap();
        assert_eq!(read_smolt_draws(&p).unwrap(), posts);
    }
}
