use super::{PeriodicGrid2D, ScalarField, VectorField2};

/// Fourth-order centred first difference along x (`axis = 0`) or y (`axis = 1`).
pub(crate) fn diff(f: &ScalarField, axis: usize) -> ScalarField {
    let g = *f.grid();
    let (h, di, dj) = if axis == 0 {
        (g.hx(), 1, 0)
    } else {
        (g.hy(), 0, 1)
    };
    let inv = 1.0 / (12.0 * h);
    let mut out = vec![0.0; g.len()];
    for j in 0..g.ny as isize {
        for i in 0..g.nx as isize {
            let p1 = f.at(i + di, j + dj);
            let p2 = f.at(i + 2 * di, j + 2 * dj);
            let m1 = f.at(i - di, j - dj);
            let m2 = f.at(i - 2 * di, j - 2 * dj);
            out[g.idx(i, j)] = (8.0 * (p1 - m1) - (p2 - m2)) * inv;
        }
    }
    ScalarField::from_vec(g, out).expect("same grid")
}

pub fn gradient(f: &ScalarField) -> VectorField2 {
    VectorField2 {
        x: diff(f, 0),
        y: diff(f, 1),
    }
}

pub fn divergence(v: &VectorField2) -> ScalarField {
    &diff(&v.x, 0) + &diff(&v.y, 1)
}

/// Symmetric part of `∇v`, stored as its three independent entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorField {
    pub xx: ScalarField,
    pub xy: ScalarField,
    pub yy: ScalarField,
}

impl SymTensorField {
    pub fn trace(&self) -> ScalarField {
        &self.xx + &self.yy
    }

    /// Frobenius norm squared `Dxx² + 2Dxy² + Dyy²`.
    pub fn norm_sq(&self) -> ScalarField {
        let g: PeriodicGrid2D = *self.xx.grid();
        let data = (0..g.len())
            .map(|k| {
                let (a, b, c) = (
                    self.xx.values()[k],
                    self.xy.values()[k],
                    self.yy.values()[k],
                );
                a * a + 2.0 * b * b + c * c
            })
            .collect();
        ScalarField::from_vec(g, data).expect("same grid")
    }
}

/// Splits `∇v` into `D = (∇v + ∇vᵗ)/2` and the off-diagonal entry
/// `A_xy = (∂_y v_x - ∂_x v_y)/2` of `A = (∇v - ∇vᵗ)/2`, so `|A|² = 2 A_xy²`.
pub fn sym_asym_grad(v: &VectorField2) -> (SymTensorField, ScalarField) {
    let ux = diff(&v.x, 0);
    let uy = diff(&v.x, 1);
    let vx = diff(&v.y, 0);
    let vy = diff(&v.y, 1);
    let d = SymTensorField {
        xx: ux,
        xy: uy.zip_map(&vx, |a, b| 0.5 * (a + b)),
        yy: vy,
    };
    let a = uy.zip_map(&vx, |a, b| 0.5 * (a - b));
    (d, a)
}
