//! On-disk cache of solved value functions, keyed by problem hash.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hjb::{HjbProblem, MarkupTable, ValueGrid};
use crate::strategies::{GridProvider, MemoryGrids, SolvedGrid};

pub struct DiskGrids {
    dir: PathBuf,
    memory: MemoryGrids,
}

/// How a solve was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Miss,
    /// A cache file existed but could not be read.
    Recomputed,
}

impl DiskGrids {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(DiskGrids {
            dir,
            memory: MemoryGrids::default(),
        })
    }

    pub fn paths(&self, problem: &HjbProblem, reduced: bool) -> (PathBuf, PathBuf) {
        let key = problem.cache_key(reduced);
        (
            self.dir.join(format!("{key}.grid")),
            self.dir.join(format!("{key}.markups")),
        )
    }

    fn read(grid: &Path, markups: &Path, problem: &HjbProblem, reduced: bool) -> Result<SolvedGrid> {
        let grid = ValueGrid::read_binary(grid)?;
        let table = MarkupTable::read_binary(markups)?;
        let ny = problem.n_y()?;
        if grid.n_times() != problem.n_time + 1 || grid.n_ys() != ny || table.n_ys() != ny {
            return Err(Error::CorruptCache {
                path: markups.to_path_buf(),
                reason: "dimensions do not match the problem".into(),
            });
        }
        Ok(SolvedGrid {
            problem: problem.clone(),
            reduced,
            grid,
            table,
        })
    }

    /// Solve through the cache, reporting whether it was hit.
    pub fn get_with_outcome(&self, problem: &HjbProblem, reduced: bool) -> Result<(Arc<SolvedGrid>, CacheOutcome)> {
        if let Some(s) = self.memory.lookup(problem, reduced) {
            return Ok((s, CacheOutcome::Hit));
        }
        let (gp, mp) = self.paths(problem, reduced);
        let mut outcome = CacheOutcome::Miss;
        if gp.exists() || mp.exists() {
            match Self::read(&gp, &mp, problem, reduced) {
                Ok(s) => {
                    let s = Arc::new(s);
                    self.memory.insert(s.clone());
                    log::debug!("cache hit {}", gp.display());
                    return Ok((s, CacheOutcome::Hit));
                }
                Err(e) => {
                    log::warn!("discarding unreadable cache entry: {e}; recomputing");
                    outcome = CacheOutcome::Recomputed;
                }
            }
        }
        log::info!("solving HJB (gamma = {:e}, {} time steps)", problem.gamma, problem.n_time);
        let s = Arc::new(SolvedGrid::compute(problem, reduced)?);
        s.grid.write_binary(&gp)?;
        s.table.write_binary(&mp)?;
        self.memory.insert(s.clone());
        Ok((s, outcome))
    }

    /// Drop solves held in memory; files stay on disk.
    pub fn release(&self) {
        self.memory.clear();
    }
}

impl GridProvider for DiskGrids {
    fn get(&self, problem: &HjbProblem, reduced: bool) -> Result<Arc<SolvedGrid>> {
        self.get_with_outcome(problem, reduced).map(|(s, _)| s)
    }
}
