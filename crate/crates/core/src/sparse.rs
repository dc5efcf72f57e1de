//! Symmetric sparse matrices on free degrees of freedom and an envelope Cholesky factorization.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Numbering of the free (non-Dirichlet) nodes.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub free: Vec<usize>,
    pub index: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> DofMap {
        let free = mesh.free_nodes();
        let mut index = vec![usize::MAX; mesh.n_nodes()];
        for (k, &i) in free.iter().enumerate() {
            index[i] = k;
        }
        DofMap { free, index }
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    pub fn extend(&self, reduced: &[f64], n_nodes: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_nodes];
        for (k, &i) in self.free.iter().enumerate() {
            out[i] = reduced[k];
        }
        out
    }
}

/// Sorted CSR sparsity pattern of the free-node adjacency.
#[derive(Clone, Debug)]
pub struct Pattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
}

impl Pattern {
    pub fn from_mesh(mesh: &Mesh, dofs: &DofMap) -> Pattern {
        let n = dofs.len();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in 0..mesh.n_cells() {
            let c = mesh.cell(e);
            for &a in c {
                let ia = dofs.index[a];
                if ia == usize::MAX {
                    continue;
                }
                for &b in c {
                    let ib = dofs.index[b];
                    if ib != usize::MAX {
                        rows[ia].push(ib);
                    }
                }
            }
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        Pattern { n, row_ptr, cols }
    }

    pub fn find(&self, i: usize, j: usize) -> usize {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        self.row_ptr[i] + row.binary_search(&j).expect("entry outside sparsity pattern")
    }
}

/// Symmetric matrix stored with both triangles.
#[derive(Clone, Debug)]
pub struct SymMatrix {
    pub pattern: Arc<Pattern>,
    pub vals: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> SymMatrix {
        let nnz = pattern.cols.len();
        SymMatrix {
            pattern,
            vals: vec![0.0; nnz],
        }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.pattern.find(i, j);
        self.vals[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.n)
            .map(|i| {
                (p.row_ptr[i]..p.row_ptr[i + 1])
                    .map(|k| self.vals[k] * x[p.cols[k]])
                    .sum()
            })
            .collect()
    }

    /// self + s·other (same pattern).
    pub fn axpy(&self, s: f64, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            pattern: self.pattern.clone(),
            vals: self.vals.iter().zip(&other.vals).map(|(a, b)| a + s * b).collect(),
        }
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.vals[self.pattern.find(i, i)]).collect()
    }
}

/// Lower-triangular envelope (skyline) Cholesky factor: row i stores columns first[i]..=i.
#[derive(Clone, Debug)]
pub struct Envelope {
    first: Vec<usize>,
    ptr: Vec<usize>,
    vals: Vec<f64>,
}

impl Envelope {
    /// Factor A = L Lᵀ; fails if A is not numerically positive definite.
    pub fn factor(a: &SymMatrix) -> Result<Envelope> {
        let p = &a.pattern;
        let n = p.n;
        let mut first = vec![0; n];
        let mut ptr = vec![0; n + 1];
        for i in 0..n {
            let c0 = p.cols[p.row_ptr[i]];
            first[i] = c0.min(i);
            ptr[i + 1] = ptr[i] + (i - first[i] + 1);
        }
        let mut vals = vec![0.0; ptr[n]];
        for i in 0..n {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.cols[k];
                if j <= i {
                    vals[ptr[i] + j - first[i]] = a.vals[k];
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let row_i = ptr[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = vals[row_i + j - fi];
                let ri = &vals[row_i + lo - fi..row_i + j - fi];
                let rj = &vals[ptr[j] + lo - fj..ptr[j] + j - fj];
                s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
                let djj = vals[ptr[j] + j - fj];
                vals[row_i + j - fi] = s / djj;
            }
            let ri = &vals[row_i..row_i + i - fi];
            let d = vals[row_i + i - fi] - ri.iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Linalg(format!("matrix not positive definite at row {i}")));
            }
            vals[row_i + i - fi] = d.sqrt();
        }
        Ok(Envelope { first, ptr, vals })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.first.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.vals[self.ptr[i]..self.ptr[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(l, v)| l * v).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.vals[self.ptr[i]..self.ptr[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::mesh::build_mesh;

    #[test]
    fn envelope_solves_laplacian_system() {
        let mesh = build_mesh(&DomainSpec::unit_square(), 2, 1.0).unwrap();
        let dofs = DofMap::new(&mesh);
        let pat = Arc::new(Pattern::from_mesh(&mesh, &dofs));
        let mut a = SymMatrix::zeros(pat);
        for e in 0..mesh.n_cells() {
            let g = mesh.shape_gradients(e);
            let c = mesh.cell(e);
            for k in 0..3 {
                for l in 0..3 {
                    let (i, j) = (dofs.index[c[k]], dofs.index[c[l]]);
                    if i != usize::MAX && j != usize::MAX {
                        a.add(i, j, mesh.measure[e] * (g[k][0] * g[l][0] + g[k][1] * g[l][1]));
                    }
                }
            }
        }
        let x: Vec<f64> = (0..a.n()).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.matvec(&x);
        let f = Envelope::factor(&a).unwrap();
        let y = f.solve(&b);
        let err = x.iter().zip(&y).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "err={err}");
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mesh = build_mesh(&DomainSpec::Interval { length: 1.0 }, 0, 1.0).unwrap();
        let dofs = DofMap::new(&mesh);
        let pat = Arc::new(Pattern::from_mesh(&mesh, &dofs));
        let mut a = SymMatrix::zeros(pat);
        for i in 0..a.n() {
            a.add(i, i, -1.0);
        }
        assert!(Envelope::factor(&a).is_err());
    }
}
