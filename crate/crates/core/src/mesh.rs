//! Structured triangulation of the square domain.
//!
//! The domain `[-side/2, side/2]^2` is divided into `n x n` pixels, each
//! split along the lower-left to upper-right diagonal into two triangles:
//!
//! ```text
//!   v2 ____ v1          v2
//!     |   /|              /|
//!     |  / |   upper     / |
//!     | /  |            /  |   lower
//!     |/___|          v0 __| v1
//!   v0
//! ```
//!
//! Element ids are dense: `(iy * n + ix) * 2 + t` with `t = 0` for the
//! lower triangle `{(x0,y0), (x0+h,y0), (x0+h,y0+h)}` and `t = 1` for the
//! upper triangle `{(x0,y0), (x0+h,y0+h), (x0,y0+h)}`. Vertices are ordered
//! counterclockwise; local edge `e` joins vertex `e` and vertex `(e+1)%3`.
//! Every pixel uses the same diagonal, so only two element shapes exist and
//! reference matrices can be shared.

use std::io::Write;

use crate::error::{Error, Result};
use crate::substrate::Substrate;

/// Dense element index in `[0, 2 n^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ElementId(pub u32);

/// Local edge index in `{0, 1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeLocalIndex(pub u8);

/// Neighbor across a local edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighbor {
    Element(ElementId),
    OuterBoundary,
}

pub(crate) const NO_NEIGHBOR: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct StructuredTriMesh {
    n: usize,
    h: f64,
    side: f64,
    /// `neighbors[e][edge]`, `NO_NEIGHBOR` marking the outer boundary.
    neighbors: Vec<[u32; 3]>,
    /// Per-element diffusivity; 0 in axon elements, `k0` elsewhere.
    k: Vec<f64>,
}

/// Builds the `2 n^2`-element triangulation with an unassigned (zero)
/// diffusivity field; call [`StructuredTriMesh::assign_diffusivity`] next.
pub fn build_mesh(side: f64, n: usize) -> Result<StructuredTriMesh> {
    if n < 2 {
        return Err(Error::param("n", format!("must be >= 2, got {n}")));
    }
    if !(side > 0.0) {
        return Err(Error::param("side", format!("must be > 0, got {side}")));
    }
    let elems = 2 * n * n;
    let mut neighbors = vec![[NO_NEIGHBOR; 3]; elems];
    let id = |ix: isize, iy: isize, t: usize| -> u32 {
        if ix < 0 || iy < 0 || ix >= n as isize || iy >= n as isize {
            NO_NEIGHBOR
        } else {
            ((iy as usize * n + ix as usize) * 2 + t) as u32
        }
    };
    for iy in 0..n as isize {
        for ix in 0..n as isize {
            let lower = id(ix, iy, 0) as usize;
            let upper = id(ix, iy, 1) as usize;
            // lower: bottom, right, diagonal
            neighbors[lower] = [id(ix, iy - 1, 1), id(ix + 1, iy, 1), id(ix, iy, 1)];
            // upper: diagonal, top, left
            neighbors[upper] = [id(ix, iy, 0), id(ix, iy + 1, 0), id(ix - 1, iy, 0)];
        }
    }
    Ok(StructuredTriMesh {
        n,
        h: side / n as f64,
        side,
        neighbors,
        k: vec![0.0; elems],
    })
}

impl StructuredTriMesh {
    pub fn pixels_per_side(&self) -> usize {
        self.n
    }

    /// Pixel width `side / n` (μm).
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn element_count(&self) -> usize {
        2 * self.n * self.n
    }

    /// 0 = lower triangle, 1 = upper triangle.
    #[inline]
    pub fn shape_of(&self, e: usize) -> usize {
        e & 1
    }

    #[inline]
    pub fn pixel_of(&self, e: usize) -> (usize, usize) {
        let p = e >> 1;
        (p % self.n, p / self.n)
    }

    #[inline]
    pub(crate) fn neighbors_raw(&self) -> &[[u32; 3]] {
        &self.neighbors
    }

    pub fn neighbor(&self, e: ElementId, edge: EdgeLocalIndex) -> Neighbor {
        match self.neighbors[e.0 as usize][edge.0 as usize] {
            NO_NEIGHBOR => Neighbor::OuterBoundary,
            id => Neighbor::Element(ElementId(id)),
        }
    }

    fn pixel_origin(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            -self.side / 2.0 + ix as f64 * self.h,
            -self.side / 2.0 + iy as f64 * self.h,
        ]
    }

    /// Counterclockwise vertex coordinates of element `e`.
    pub fn element_vertices(&self, e: usize) -> [[f64; 2]; 3] {
        let (ix, iy) = self.pixel_of(e);
        let [x0, y0] = self.pixel_origin(ix, iy);
        let h = self.h;
        if self.shape_of(e) == 0 {
            [[x0, y0], [x0 + h, y0], [x0 + h, y0 + h]]
        } else {
            [[x0, y0], [x0 + h, y0 + h], [x0, y0 + h]]
        }
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let v = self.element_vertices(e);
        [
            (v[0][0] + v[1][0] + v[2][0]) / 3.0,
            (v[0][1] + v[1][1] + v[2][1]) / 3.0,
        ]
    }

    /// Element containing `p`, or `None` outside the domain. Points exactly
    /// on the pixel diagonal resolve to the lower triangle.
    pub fn locate(&self, p: [f64; 2]) -> Option<ElementId> {
        let half = self.side / 2.0;
        if p[0] < -half || p[0] > half || p[1] < -half || p[1] > half {
            return None;
        }
        let fx = ((p[0] + half) / self.h).floor() as isize;
        let fy = ((p[1] + half) / self.h).floor() as isize;
        let ix = fx.clamp(0, self.n as isize - 1) as usize;
        let iy = fy.clamp(0, self.n as isize - 1) as usize;
        let [x0, y0] = self.pixel_origin(ix, iy);
        let t = usize::from(p[1] - y0 > p[0] - x0);
        Some(ElementId(((iy * self.n + ix) * 2 + t) as u32))
    }

    pub fn diffusivity(&self) -> &[f64] {
        &self.k
    }

    pub fn max_diffusivity(&self) -> f64 {
        self.k.iter().cloned().fold(0.0, f64::max)
    }

    /// Sets `k = 0` on elements whose centroid lies in the axon region and
    /// `k = substrate.k0` elsewhere. The axon boundary is therefore
    /// stair-stepped at resolution `h`.
    pub fn assign_diffusivity(&mut self, substrate: &Substrate) -> Result<()> {
        if (substrate.side - self.side).abs() > 1e-12 * self.side.max(1.0) {
            return Err(Error::param(
                "substrate",
                format!(
                    "side mismatch: mesh {} vs substrate {}",
                    self.side, substrate.side
                ),
            ));
        }
        for e in 0..self.element_count() {
            let c = self.centroid(e);
            self.k[e] = if substrate.contains_axon(c) {
                0.0
            } else {
                substrate.k0
            };
        }
        Ok(())
    }

    /// Uniform diffusivity everywhere (free diffusion with arbitrary k).
    pub fn set_uniform_diffusivity(&mut self, k: f64) -> Result<()> {
        if !(k > 0.0) {
            return Err(Error::param("k", format!("must be > 0, got {k}")));
        }
        self.k.fill(k);
        Ok(())
    }

    /// Elements with `k = 0` whose three neighbors also have `k = 0`
    /// (or are the outer boundary).
    pub fn interior_axon_elements(&self) -> Vec<usize> {
        (0..self.element_count())
            .filter(|&e| {
                self.k[e] == 0.0
                    && self.neighbors[e]
                        .iter()
                        .all(|&nb| nb == NO_NEIGHBOR || self.k[nb as usize] == 0.0)
            })
            .collect()
    }

    /// Elements with at least one edge on the outer boundary.
    pub fn boundary_elements(&self) -> Vec<usize> {
        (0..self.element_count())
            .filter(|&e| self.neighbors[e].iter().any(|&nb| nb == NO_NEIGHBOR))
            .collect()
    }

    /// Text dump of the diffusivity pattern: one `0`/`1` per element
    /// (1 = diffusive), row-major by pixel, lower then upper triangle.
    pub fn write_diffusivity_grid(&self, w: &mut impl Write) -> Result<()> {
        for iy in 0..self.n {
            let mut line = String::with_capacity(4 * self.n);
            for ix in 0..self.n {
                let base = (iy * self.n + ix) * 2;
                for t in 0..2 {
                    if !line.is_empty() {
                        line.push(' ');
                    }
                    line.push(if self.k[base + t] > 0.0 { '1' } else { '0' });
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}
