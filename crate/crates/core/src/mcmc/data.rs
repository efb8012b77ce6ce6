//! Fitting data: per-block scaled design matrices and tie bookkeeping.

use nalgebra::DMatrix;

use crate::design::{raw_row, Block, OrthoPolyBasis, ScalingSpec};
use crate::error::{Error, Result};
use crate::krige::{coords_of, Coord};
use crate::records::{Indicator, RecordTensor, Site};

/// Cells of one block, ordered by `(t, day)` group then site.
#[derive(Debug, Clone)]
pub struct BlockData {
    pub block: Block,
    /// `(t, day)` per group.
    pub groups: Vec<(usize, usize)>,
    pub n_sites: usize,
    pub scaling: ScalingSpec,
    /// Scaled covariates, one column per cell (intercept in row 0).
    pub xt: DMatrix<f64>,
    pub tensor_index: Vec<usize>,
    /// Tensor positions of the one- and two-day lags (the day blocks use only the first).
    pub lag_index: Vec<[Option<usize>; 2]>,
    /// `false` for cells whose own indicator is tied.
    pub observed: Vec<bool>,
}

impl BlockData {
    pub fn n_cells(&self) -> usize {
        self.tensor_index.len()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn cell(&self, group: usize, site: usize) -> usize {
        group * self.n_sites + site
    }

    /// Scaled row for `cell` under the given indicator state.
    pub fn row(&self, cell: usize, indicators: &[u8], dists: &[f64], basis: &OrthoPolyBasis) -> Result<Vec<f64>> {
        let (t, day) = self.groups[cell / self.n_sites];
        let site = cell % self.n_sites;
        let lag = |k: usize| self.lag_index[cell][k].map_or(0.0, |i| indicators[i] as f64);
        let mut row = raw_row(self.block, t, day, lag(0), lag(1), dists[site], basis)?.0;
        self.scaling.apply(&mut row);
        Ok(row)
    }
}

#[derive(Debug, Clone)]
pub struct TieCell {
    pub tensor_index: usize,
    pub multiplicity: u32,
    /// `(block slot, cell)` rows whose lags read this cell.
    pub dependents: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct FitData {
    pub sites: Vec<Site>,
    pub coords: Vec<Coord>,
    pub dists: Vec<f64>,
    pub years: usize,
    pub days: usize,
    pub basis: OrthoPolyBasis,
    pub tensor: RecordTensor,
    /// Indicators with ties set to 0.
    pub initial_indicators: Vec<u8>,
    /// In `Block::ALL` order.
    pub blocks: Vec<BlockData>,
    pub ties: Vec<TieCell>,
}

impl FitData {
    pub fn new(tensor: RecordTensor, sites: Vec<Site>) -> Result<Self> {
        if sites.len() != tensor.n_sites() {
            return Err(Error::MalformedInput(format!(
                "{} sites for a tensor with {}",
                sites.len(),
                tensor.n_sites()
            )));
        }
        if tensor.days() < 3 {
            return Err(Error::InvalidParameter("model needs at least 3 days per year".into()));
        }
        if let Some(s) = sites.iter().find(|s| !(s.dist_coast_km > 0.0)) {
            return Err(Error::MalformedInput(format!("site {} has non-positive coast distance", s.id)));
        }
        let basis = OrthoPolyBasis::new(tensor.years())?;
        let years = tensor.years();
        let days = tensor.days();
        let n = tensor.n_sites();
        let dists: Vec<f64> = sites.iter().map(|s| s.dist_coast_km).collect();
        let initial_indicators: Vec<u8> = tensor.cells().iter().map(|c| c.strict()).collect();

        let mut blocks = Vec::with_capacity(3);
        for block in Block::ALL {
            let groups = super::group_days(block, years, days);
            let p = block.dim();
            let n_cells = groups.len() * n;
            let mut tensor_index = Vec::with_capacity(n_cells);
            let mut lag_index = Vec::with_capacity(n_cells);
            let mut observed = Vec::with_capacity(n_cells);
            let mut raw = DMatrix::zeros(n_cells, p);
            for (g, &(t, day)) in groups.iter().enumerate() {
                for s in 0..n {
                    let cell = g * n + s;
                    let idx = tensor.index(s, t, day);
                    tensor_index.push(idx);
                    observed.push(!tensor.cells()[idx].is_tied());
                    let lags = [1, 2].map(|back| tensor.lag_position(t, day, back).map(|(tt, dd)| tensor.index(s, tt, dd)));
                    let lag = |k: usize| lags[k].map_or(0.0, |i| initial_indicators[i] as f64);
                    let row = raw_row(block, t, day, lag(0), lag(1), dists[s], &basis)?;
                    for j in 0..p {
                        raw[(cell, j)] = row[j];
                    }
                    lag_index.push(lags);
                }
            }
            let scaling = ScalingSpec::fit_lenient(&raw);
            scaling.apply_matrix(&mut raw);
            blocks.push(BlockData {
                block,
                groups,
                n_sites: n,
                scaling,
                xt: raw.transpose(),
                tensor_index,
                lag_index,
                observed,
            });
        }

        let mut ties: Vec<TieCell> = Vec::new();
        let mut tie_slot = vec![usize::MAX; tensor.cells().len()];
        for (idx, c) in tensor.cells().iter().enumerate() {
            if let Indicator::Tied(r) = c {
                tie_slot[idx] = ties.len();
                ties.push(TieCell {
                    tensor_index: idx,
                    multiplicity: *r,
                    dependents: Vec::new(),
                });
            }
        }
        for (slot, b) in blocks.iter().enumerate() {
            let used = if b.block == Block::Main { 2 } else { 1 };
            for (cell, lags) in b.lag_index.iter().enumerate() {
                for lag in lags.iter().take(used).flatten() {
                    if tie_slot[*lag] != usize::MAX {
                        let deps = &mut ties[tie_slot[*lag]].dependents;
                        if deps.last() != Some(&(slot, cell)) {
                            deps.push((slot, cell));
                        }
                    }
                }
            }
        }

        Ok(FitData {
            coords: coords_of(&sites),
            sites,
            dists,
            years,
            days,
            basis,
            tensor,
            initial_indicators,
            blocks,
            ties,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn scaling(&self) -> Vec<ScalingSpec> {
        self.blocks.iter().map(|b| b.scaling.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::Indicator::{NotRecord, Record, Tied};

    fn sites(n: usize) -> Vec<Site> {
        (0..n).map(|i| Site::new(format!("s{i}"), i as f64 * 10.0, 0.0, 5.0 + i as f64)).collect()
    }

    #[test]
    fn layout_and_lags() {
        let tensor = RecordTensor::from_fn(2, 4, 6, |s, t, d| {
            if t == 1 || (d + s) % 3 == 0 {
                Record
            } else {
                NotRecord
            }
        });
        let data = FitData::new(tensor.clone(), sites(2)).unwrap();
        let main = &data.blocks[0];
        assert_eq!(main.groups.len(), 3 * 4);
        assert_eq!(main.n_cells(), 24);
        // day 1 of year 2 lags day 6 of year 1
        let d1 = &data.blocks[1];
        assert_eq!(d1.lag_index[0][0], Some(tensor.index(0, 1, 6)));
        assert_eq!(d1.xt.nrows(), 3);
        assert!(data.ties.is_empty());
    }

    #[test]
    fn tie_dependents() {
        let tensor = RecordTensor::from_fn(1, 4, 5, |_, t, d| match (t, d) {
            (1, _) => Record,
            (3, 4) => Tied(2),
            _ => NotRecord,
        });
        let data = FitData::new(tensor, sites(1)).unwrap();
        assert_eq!(data.ties.len(), 1);
        let deps = &data.ties[0].dependents;
        // day 5 (lag 1) of year 3 and day 1 of year 4 (lag 2 does not enter day-1 rows)
        assert!(deps.iter().any(|&(b, _)| b == 0));
        assert_eq!(deps.len(), 1);
        let main = &data.blocks[0];
        assert!(!main.observed[main.cell(main.groups.iter().position(|&g| g == (3, 4)).unwrap(), 0)]);
    }
}
