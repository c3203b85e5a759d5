use std::collections::BTreeMap;

use num_complex::Complex64;

use super::{Branch, Grid};
use crate::error::{Error, Result};

/// Sparse nodal admittance matrix `Y = G + jB` in compressed-row form.
///
/// Every bus has a (possibly zero) diagonal entry; off-diagonal entries exist
/// exactly for bus pairs joined by an in-service branch, so the pattern is
/// structurally symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
    bus_ids: Vec<usize>,
}

/// The four π-model entries a branch adds to `Y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchStamp {
    pub from: usize,
    pub to: usize,
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

/// π-model stamp of one branch between dense bus indices `from` and `to`.
pub fn branch_stamp(branch: &Branch, from: usize, to: usize) -> Result<BranchStamp> {
    let z = Complex64::new(branch.r_pu, branch.x_pu);
    if z.norm_sqr() == 0.0 {
        return Err(Error::SingularBranch { id: branch.id });
    }
    let ys = z.inv();
    let half_charging = Complex64::new(0.0, branch.b_charging_pu / 2.0);
    let t = branch.tap_ratio;
    let shift = Complex64::from_polar(1.0, branch.shift_rad);
    Ok(BranchStamp {
        from,
        to,
        yff: (ys + half_charging) / (t * t),
        yft: -ys / (shift * t),
        ytf: -ys * shift / t,
        ytt: ys + half_charging,
    })
}

impl AdmittanceMatrix {
    fn from_entries(n: usize, entries: BTreeMap<(usize, usize), Complex64>, bus_ids: Vec<usize>) -> Self {
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (&(i, k), &v) in &entries {
            row_ptr[i + 1] += 1;
            col_idx.push(k);
            values.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        AdmittanceMatrix {
            n,
            row_ptr,
            col_idx,
            values,
            bus_ids,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// External bus id of each dense index.
    pub fn bus_ids(&self) -> &[usize] {
        &self.bus_ids
    }

    pub fn index_of(&self, bus_id: usize) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == bus_id)
    }

    /// Stored entries of row `i` as `(column, value)`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn contains(&self, i: usize, k: usize) -> bool {
        self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
            .binary_search(&k)
            .is_ok()
    }

    /// Entry `(i, k)`, zero when not stored.
    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&k) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut m = vec![vec![Complex64::new(0.0, 0.0); self.n]; self.n];
        for (i, row) in m.iter_mut().enumerate() {
            for (k, v) in self.row(i) {
                row[k] = v;
            }
        }
        m
    }
}

/// Assembles the nodal admittance matrix from in-service branches (π-model
/// with off-nominal tap and phase shift) and bus shunts.
pub fn build_admittance(grid: &Grid) -> Result<AdmittanceMatrix> {
    let idx = grid.bus_index();
    let n = grid.n_buses();
    let mut entries: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
    for i in 0..n {
        entries.insert((i, i), Complex64::new(0.0, 0.0));
    }
    for br in grid.branches.iter().filter(|b| b.in_service) {
        let (Some(&f), Some(&t)) = (idx.get(&br.from_bus), idx.get(&br.to_bus)) else {
            return Err(Error::Validation(vec![format!("branch {} references an unknown bus", br.id)]));
        };
        if !grid.buses[f].in_service || !grid.buses[t].in_service {
            continue;
        }
        let s = branch_stamp(br, f, t)?;
        *entries.entry((f, f)).or_default() += s.yff;
        *entries.entry((f, t)).or_default() += s.yft;
        *entries.entry((t, f)).or_default() += s.ytf;
        *entries.entry((t, t)).or_default() += s.ytt;
    }
    for sh in &grid.shunts {
        let Some(&i) = idx.get(&sh.bus) else {
            return Err(Error::Validation(vec![format!("shunt references unknown bus {}", sh.bus)]));
        };
        if grid.buses[i].in_service {
            *entries.entry((i, i)).or_default() += Complex64::new(sh.g_pu, sh.b_pu);
        }
    }
    let ids = grid.buses.iter().map(|b| b.id).collect();
    Ok(AdmittanceMatrix::from_entries(n, entries, ids))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::cases;
    use crate::grid::parse_matpower_case;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_bus(b_charging: f64) -> Grid {
        let text = format!(
            "mpc.baseMVA = 100;\n\
             mpc.bus = [1 3 0 0 0 0 1 1 0 230 1 1.1 0.9; 2 1 0 0 0 0 1 1 0 230 1 1.1 0.9];\n\
             mpc.gen = [1 0 0 100 -100 1 100 1 200 0];\n\
             mpc.branch = [1 2 0 0.1 {b_charging} 0 0 0 0 0 1 -360 360];\n"
        );
        parse_matpower_case(&text).unwrap()
    }

    #[test]
    fn single_reactive_branch() {
        let y = build_admittance(&two_bus(0.0)).unwrap();
        let d = y.to_dense();
        let expect = [[c(0.0, -10.0), c(0.0, 10.0)], [c(0.0, 10.0), c(0.0, -10.0)]];
        for i in 0..2 {
            for k in 0..2 {
                assert!((d[i][k] - expect[i][k]).norm() < 1e-12, "({i},{k}) = {}", d[i][k]);
            }
        }
    }

    #[test]
    fn charging_adds_half_to_each_diagonal() {
        let y0 = build_admittance(&two_bus(0.0)).unwrap();
        let y1 = build_admittance(&two_bus(0.2)).unwrap();
        for i in 0..2 {
            assert!((y1.get(i, i) - y0.get(i, i) - c(0.0, 0.1)).norm() < 1e-12);
        }
        assert_eq!(y1.get(0, 1), y0.get(0, 1));
    }

    #[test]
    fn zero_impedance_branch_is_rejected() {
        let mut g = two_bus(0.0);
        g.branches[0].x_pu = 0.0;
        assert!(matches!(build_admittance(&g), Err(Error::SingularBranch { id: 1 })));
    }

    #[test]
    fn case9_off_diagonals_are_negated_series_admittance() {
        let g = cases::case9();
        let y = build_admittance(&g).unwrap();
        let idx = g.bus_index();
        let mut off_diagonal = 0;
        for i in 0..y.n() {
            off_diagonal += y.row(i).filter(|&(k, _)| k != i).count();
        }
        assert_eq!(off_diagonal, 2 * g.branches.len());
        for br in &g.branches {
            // independent series admittance: (r - jx) / (r^2 + x^2)
            let d = br.r_pu * br.r_pu + br.x_pu * br.x_pu;
            let series = c(br.r_pu / d, -br.x_pu / d);
            let (f, t) = (idx[&br.from_bus], idx[&br.to_bus]);
            assert!((y.get(f, t) + series).norm() < 1e-12);
            assert!((y.get(t, f) + series).norm() < 1e-12);
        }
    }

    #[test]
    fn out_of_service_branch_has_no_entries() {
        let mut g = cases::case9();
        g.branches[4].in_service = false;
        let y = build_admittance(&g).unwrap();
        let idx = g.bus_index();
        let (f, t) = (idx[&g.branches[4].from_bus], idx[&g.branches[4].to_bus]);
        assert!(!y.contains(f, t) && !y.contains(t, f));
    }

    #[test]
    fn phase_shifter_breaks_symmetry() {
        let mut g = two_bus(0.0);
        g.branches[0].shift_rad = 0.1;
        g.branches[0].tap_ratio = 1.05;
        let y = build_admittance(&g).unwrap();
        assert!((y.get(0, 1) - y.get(1, 0)).norm() > 1e-3);
        let ys = c(0.0, -10.0);
        assert!((y.get(0, 0) - ys / (1.05 * 1.05)).norm() < 1e-12);
        assert!((y.get(1, 1) - ys).norm() < 1e-12);
    }
}
