//! Rectangular MAC grid, scalar/staggered field containers and the discrete
//! norms used by the estimate checks.
//!
//! Layout: cell-centered scalars are `nx * ny` with index `j*nx + i`
//! (row-major, y outer). x-normal velocities live on `(nx+1) * ny` vertical
//! faces, y-normal velocities on `nx * (ny+1)` horizontal faces. Boundary
//! faces are enumerated left, right, bottom, top; each carries one outward
//! unit normal.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    /// Outward unit normal (nx, ny).
    pub fn normal(self) -> (f64, f64) {
        match self {
            Side::Left => (-1.0, 0.0),
            Side::Right => (1.0, 0.0),
            Side::Bottom => (0.0, -1.0),
            Side::Top => (0.0, 1.0),
        }
    }
}

/// One boundary face: a side plus the index along that side
/// (j for left/right, i for bottom/top).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub side: Side,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredGrid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dx: f64,
    pub dy: f64,
}

impl StaggeredGrid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || (ny < 4 && ny != 1) {
            return Err(Error::Shape(format!(
                "cell counts must be >= 4 (or ny = 1 for slice mode), got {nx} x {ny}"
            )));
        }
        if lx <= 0.0 || ly <= 0.0 {
            return Err(Error::Shape("domain side lengths must be positive".into()));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            dx: lx / nx as f64,
            dy: ly / ny as f64,
        })
    }

    pub fn unit_square(n: usize) -> Self {
        Self::new(n, n, 1.0, 1.0).expect("n >= 4")
    }

    /// 1-D slice: ny = 1 with square cells.
    pub fn slice_1d(nx: usize, lx: f64) -> Self {
        let dx = lx / nx as f64;
        Self {
            nx,
            ny: 1,
            lx,
            ly: dx,
            dx,
            dy: dx,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy)
    }

    pub fn xface_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn xface_pos(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.dx, (j as f64 + 0.5) * self.dy)
    }

    pub fn yface_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn yface_pos(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, j as f64 * self.dy)
    }

    pub fn cell_field(&self) -> Field {
        Field::zeros(self.nx, self.ny)
    }

    pub fn xface_field(&self) -> Field {
        Field::zeros(self.nx + 1, self.ny)
    }

    pub fn yface_field(&self) -> Field {
        Field::zeros(self.nx, self.ny + 1)
    }

    pub fn n_boundary_faces(&self) -> usize {
        2 * self.ny + 2 * self.nx
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.lx + self.ly)
    }

    /// Boundary faces in the canonical order: left (j ascending), right,
    /// bottom (i ascending), top.
    pub fn boundary_faces(&self) -> impl Iterator<Item = BoundaryFace> + '_ {
        let ny = self.ny;
        let nx = self.nx;
        Side::ALL.into_iter().flat_map(move |side| {
            let n = match side {
                Side::Left | Side::Right => ny,
                Side::Bottom | Side::Top => nx,
            };
            (0..n).map(move |k| BoundaryFace { side, k })
        })
    }

    pub fn face_length(&self, face: BoundaryFace) -> f64 {
        match face.side {
            Side::Left | Side::Right => self.dy,
            Side::Bottom | Side::Top => self.dx,
        }
    }

    /// Cell adjacent to a boundary face.
    pub fn adjacent_cell(&self, face: BoundaryFace) -> (usize, usize) {
        match face.side {
            Side::Left => (0, face.k),
            Side::Right => (self.nx - 1, face.k),
            Side::Bottom => (face.k, 0),
            Side::Top => (face.k, self.ny - 1),
        }
    }

    /// Global boundary face index in the canonical enumeration.
    pub fn boundary_face_index(&self, face: BoundaryFace) -> usize {
        match face.side {
            Side::Left => face.k,
            Side::Right => self.ny + face.k,
            Side::Bottom => 2 * self.ny + face.k,
            Side::Top => 2 * self.ny + self.nx + face.k,
        }
    }
}

/// Dense 2-D scalar array; the same container backs cell fields and the two
/// staggered face layouts (dimensions differ).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            data: vec![0.0; nx * ny],
        }
    }

    pub fn constant(nx: usize, ny: usize, c: f64) -> Self {
        Self {
            nx,
            ny,
            data: vec![c; nx * ny],
        }
    }

    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                data.push(f(i, j));
            }
        }
        Self { nx, ny, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nx + i]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[j * self.nx + i]
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// self += c * other
    pub fn axpy(&mut self, c: f64, other: &Field) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn dot(&self, other: &Field) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// self += c * other, returning the updated self . self (fused pass).
    pub fn axpy_dot_self(&mut self, c: f64, other: &Field) -> f64 {
        debug_assert!(self.same_shape(other));
        let mut acc = 0.0;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
            acc += *a * *a;
        }
        acc
    }

    /// self = x + b * self (fused scale-and-add).
    pub fn xpby(&mut self, x: &Field, b: f64) {
        debug_assert!(self.same_shape(x));
        for (a, xv) in self.data.iter_mut().zip(&x.data) {
            *a = xv + b * *a;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    H1Semi,
    Linf,
}

/// Midpoint-rule norm of a cell field. `H1Semi` differences the cell values
/// across interior faces.
pub fn norm(field: &Field, grid: &StaggeredGrid, kind: NormKind) -> Result<f64> {
    if field.nx != grid.nx || field.ny != grid.ny {
        return Err(Error::Shape(format!(
            "norm: field is {}x{}, grid cells are {}x{}",
            field.nx, field.ny, grid.nx, grid.ny
        )));
    }
    let area = grid.cell_area();
    Ok(match kind {
        NormKind::L1 => field.data.iter().map(|v| v.abs()).sum::<f64>() * area,
        NormKind::L2 => (field.data.iter().map(|v| v * v).sum::<f64>() * area).sqrt(),
        NormKind::Linf => field.max_abs(),
        NormKind::H1Semi => {
            let mut acc = 0.0;
            for j in 0..grid.ny {
                for i in 0..grid.nx.saturating_sub(1) {
                    let d = (field.at(i + 1, j) - field.at(i, j)) / grid.dx;
                    acc += d * d;
                }
            }
            for j in 0..grid.ny.saturating_sub(1) {
                for i in 0..grid.nx {
                    let d = (field.at(i, j + 1) - field.at(i, j)) / grid.dy;
                    acc += d * d;
                }
            }
            (acc * area).sqrt()
        }
    })
}

/// Conservative face-difference divergence, one value per cell.
pub fn discrete_divergence(vx: &Field, vy: &Field, grid: &StaggeredGrid) -> Result<Field> {
    if vx.nx != grid.nx + 1 || vx.ny != grid.ny || vy.nx != grid.nx || vy.ny != grid.ny + 1 {
        return Err(Error::Shape(
            "discrete_divergence: staggered components do not match the grid".into(),
        ));
    }
    let mut div = grid.cell_field();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let d = (vx.at(i + 1, j) - vx.at(i, j)) / grid.dx
                + (vy.at(i, j + 1) - vy.at(i, j)) / grid.dy;
            *div.at_mut(i, j) = d;
        }
    }
    Ok(div)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_rejects_tiny() {
        assert!(StaggeredGrid::new(3, 8, 1.0, 1.0).is_err());
        assert!(StaggeredGrid::new(8, 1, 1.0, 1.0).is_ok());
    }

    #[test]
    fn boundary_enumeration_is_bijective() {
        let g = StaggeredGrid::unit_square(6);
        let faces: Vec<_> = g.boundary_faces().collect();
        assert_eq!(faces.len(), g.n_boundary_faces());
        for (n, f) in faces.iter().enumerate() {
            assert_eq!(g.boundary_face_index(*f), n);
        }
    }

    #[test]
    fn divergence_of_uniform_field_is_zero() {
        let g = StaggeredGrid::unit_square(8);
        let mut vx = g.xface_field();
        vx.data.fill(1.0);
        let vy = g.yface_field();
        let div = discrete_divergence(&vx, &vy, &g).unwrap();
        assert_eq!(div.max_abs(), 0.0);
    }

    #[test]
    fn divergence_exact_for_linear_field() {
        // v_x = x, v_y = 0 -> div = 1 in every cell.
        let g = StaggeredGrid::unit_square(16);
        let vx = Field::from_fn(g.nx + 1, g.ny, |i, j| g.xface_pos(i, j).0);
        let vy = g.yface_field();
        let div = discrete_divergence(&vx, &vy, &g).unwrap();
        for v in &div.data {
            assert!((v - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn stream_function_field_is_discretely_divergence_free() {
        // vx = (psi(i,j+1) - psi(i,j))/dy, vy = -(psi(i+1,j) - psi(i,j))/dx
        // with psi on nodes: the MAC divergence telescopes to zero exactly.
        let g = StaggeredGrid::unit_square(32);
        let psi = |x: f64, y: f64| (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin();
        let vx = Field::from_fn(g.nx + 1, g.ny, |i, j| {
            let x = i as f64 * g.dx;
            (psi(x, (j + 1) as f64 * g.dy) - psi(x, j as f64 * g.dy)) / g.dy
        });
        let vy = Field::from_fn(g.nx, g.ny + 1, |i, j| {
            let y = j as f64 * g.dy;
            -(psi((i + 1) as f64 * g.dx, y) - psi(i as f64 * g.dx, y)) / g.dx
        });
        let div = discrete_divergence(&vx, &vy, &g).unwrap();
        assert!(div.max_abs() <= 1e-13, "max div {}", div.max_abs());
    }

    #[test]
    fn divergence_second_order_for_smooth_field() {
        // Point samples of the stream-function field psi = sin(pi x) sin(pi y)/pi:
        // div -> 0 at O(dx^2). Anisotropic cells (dy = 2 dx) so the one-sided
        // difference errors of the two directions do not cancel exactly.
        let pi = std::f64::consts::PI;
        let res: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| {
                let g = StaggeredGrid::new(n, n / 2, 1.0, 1.0).unwrap();
                let vx = Field::from_fn(g.nx + 1, g.ny, |i, j| {
                    let (x, y) = g.xface_pos(i, j);
                    (pi * x).sin() * (pi * y).cos()
                });
                let vy = Field::from_fn(g.nx, g.ny + 1, |i, j| {
                    let (x, y) = g.yface_pos(i, j);
                    -(pi * x).cos() * (pi * y).sin()
                });
                discrete_divergence(&vx, &vy, &g).unwrap().max_abs()
            })
            .collect();
        let rate1 = (res[0] / res[1]).log2();
        let rate2 = (res[1] / res[2]).log2();
        assert!(rate1 > 1.7 && rate2 > 1.7, "rates {rate1} {rate2}");
    }

    #[test]
    fn norm_examples() {
        let g = StaggeredGrid::unit_square(64);
        let c = Field::constant(g.nx, g.ny, -2.5);
        assert!((norm(&c, &g, NormKind::L2).unwrap() - 2.5).abs() < 1e-12);
        assert!((norm(&c, &g, NormKind::L1).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(norm(&c, &g, NormKind::Linf).unwrap(), 2.5);

        let lin = Field::from_fn(g.nx, g.ny, |i, j| g.cell_center(i, j).0);
        let h1 = norm(&lin, &g, NormKind::H1Semi).unwrap();
        assert!((h1 - 1.0).abs() < 0.02, "h1 = {h1}");

        let g2 = StaggeredGrid::unit_square(128);
        let s = Field::from_fn(g2.nx, g2.ny, |i, j| {
            (2.0 * std::f64::consts::PI * g2.cell_center(i, j).0).sin()
        });
        let l2 = norm(&s, &g2, NormKind::L2).unwrap();
        assert!((l2 - 1.0 / 2.0f64.sqrt()).abs() < 1e-3, "l2 = {l2}");
    }

    proptest! {
        #[test]
        fn norms_absolutely_homogeneous(c in -10.0f64..10.0, seed in 0u64..1000) {
            let g = StaggeredGrid::unit_square(8);
            let f = Field::from_fn(8, 8, |i, j| {
                let k = (seed as usize * 31 + i * 7 + j * 13) % 17;
                k as f64 / 17.0 - 0.5
            });
            let mut cf = f.clone();
            cf.scale(c);
            for kind in [NormKind::L1, NormKind::L2, NormKind::H1Semi, NormKind::Linf] {
                let a = norm(&cf, &g, kind).unwrap();
                let b = c.abs() * norm(&f, &g, kind).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
            }
        }

        #[test]
        fn norms_triangle_inequality(s1 in 0u64..500, s2 in 500u64..1000) {
            let g = StaggeredGrid::unit_square(8);
            let mk = |seed: u64| Field::from_fn(8, 8, |i, j| {
                let k = (seed as usize * 37 + i * 11 + j * 5) % 23;
                k as f64 / 23.0 - 0.4
            });
            let f = mk(s1);
            let h = mk(s2);
            let mut sum = f.clone();
            sum.axpy(1.0, &h);
            for kind in [NormKind::L1, NormKind::L2, NormKind::H1Semi, NormKind::Linf] {
                let a = norm(&sum, &g, kind).unwrap();
                let b = norm(&f, &g, kind).unwrap() + norm(&h, &g, kind).unwrap();
                prop_assert!(a <= b + 1e-12);
            }
        }
    }
}
