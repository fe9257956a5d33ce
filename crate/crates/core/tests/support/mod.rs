//! Independent dense reference assembly of the split weak form.
//!
//! Everything here is deliberately built by a different route than the
//! production solver: global dense matrices instead of per-element
//! reference tables, numerically inverted affine maps instead of
//! precomputed shape data, Duffy (collapsed tensor Gauss) interior
//! quadrature instead of symmetric triangle rules, and one more Gauss
//! point than production on both interiors and edges. Both routes
//! integrate polynomials exactly, so agreement must hold to roundoff.

use eap_core::mesh::{ElementId, EdgeLocalIndex, Neighbor, StructuredTriMesh};
use eap_core::solver::Basis;
use nalgebra::{DMatrix, DVector};

/// Gauss-Legendre nodes/weights on [-1, 1]; an independent copy for the
/// reference assembly.
pub fn gl(n: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let d = (4.8f64).sqrt();
            let a = ((3.0 - d) / 7.0).sqrt();
            let b = ((3.0 + d) / 7.0).sqrt();
            let s = (30.0f64).sqrt();
            let wa = (18.0 + s) / 36.0;
            let wb = (18.0 - s) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        5 => {
            let d = (10.0f64 / 7.0).sqrt();
            let a = (5.0 - 2.0 * d).sqrt() / 3.0;
            let b = (5.0 + 2.0 * d).sqrt() / 3.0;
            let s = (70.0f64).sqrt();
            let wa = (322.0 + 13.0 * s) / 900.0;
            let wb = (322.0 - 13.0 * s) / 900.0;
            (vec![-b, -a, 0.0, a, b], vec![wb, wa, 128.0 / 225.0, wa, wb])
        }
        _ => panic!("no table for n = {n}"),
    }
}

/// Duffy-transform quadrature on the reference triangle, exact for total
/// degree `2m - 3`; weights include the triangle measure.
pub fn duffy(m: usize) -> Vec<([f64; 2], f64)> {
    let (t, w) = gl(m);
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        let a = 0.5 * (t[i] + 1.0);
        let wa = 0.5 * w[i];
        for j in 0..m {
            let b = 0.5 * (t[j] + 1.0);
            let wb = 0.5 * w[j];
            out.push(([a, b * (1.0 - a)], wa * wb * (1.0 - a)));
        }
    }
    out
}

fn invert2(j: [[f64; 2]; 2]) -> ([[f64; 2]; 2], f64) {
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    (
        [
            [j[1][1] / det, -j[0][1] / det],
            [-j[1][0] / det, j[0][0] / det],
        ],
        det,
    )
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Dense operators of the split system:
/// `M q_d = A_d u` and `M u_t = B_x q_x + B_y q_y`.
pub struct DenseReference {
    pub mass: DMatrix<f64>,
    pub a: [DMatrix<f64>; 2],
    pub b: [DMatrix<f64>; 2],
    d: usize,
}

impl DenseReference {
    pub fn assemble(mesh: &StructuredTriMesh, basis: &Basis) -> DenseReference {
        let d = basis.node_count();
        let p = basis.order();
        let nelem = mesh.element_count();
        let n = nelem * d;
        let mut mass = DMatrix::zeros(n, n);
        let mut a = [DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
        let mut b = [DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
        let interior = duffy(p + 2);
        let (edge_t, edge_w) = gl(p + 2);
        let k = mesh.diffusivity();

        let mut vals = vec![0.0; d];
        let mut grads = vec![[0.0; 2]; d];
        let mut nb_vals = vec![0.0; d];

        for e in 0..nelem {
            let v = mesh.element_vertices(e);
            let jac = [
                [v[1][0] - v[0][0], v[2][0] - v[0][0]],
                [v[1][1] - v[0][1], v[2][1] - v[0][1]],
            ];
            let (jinv, det) = invert2(jac);
            assert!(det > 0.0);

            // volume terms
            for &(xi, w) in &interior {
                basis.eval(xi[0], xi[1], &mut vals);
                basis.eval_grad(xi[0], xi[1], &mut grads);
                for i in 0..d {
                    // physical gradient: J^{-T} grad_ref
                    let gx = jinv[0][0] * grads[i][0] + jinv[1][0] * grads[i][1];
                    let gy = jinv[0][1] * grads[i][0] + jinv[1][1] * grads[i][1];
                    for j in 0..d {
                        let m = w * det * vals[i] * vals[j];
                        mass[(e * d + i, e * d + j)] += m;
                        a[0][(e * d + i, e * d + j)] -= w * det * gx * vals[j];
                        a[1][(e * d + i, e * d + j)] -= w * det * gy * vals[j];
                        b[0][(e * d + i, e * d + j)] -= k[e] * w * det * gx * vals[j];
                        b[1][(e * d + i, e * d + j)] -= k[e] * w * det * gy * vals[j];
                    }
                }
            }

            // edge terms
            for edge in 0..3 {
                let pa = v[edge];
                let pb = v[(edge + 1) % 3];
                let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
                let normal = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
                let nb = mesh.neighbor(ElementId(e as u32), EdgeLocalIndex(edge as u8));
                for (gi, &t) in edge_t.iter().enumerate() {
                    let s = 0.5 * (t + 1.0);
                    let phys = [
                        pa[0] + s * (pb[0] - pa[0]),
                        pa[1] + s * (pb[1] - pa[1]),
                    ];
                    // my reference coordinates of the physical point
                    let rel = [phys[0] - v[0][0], phys[1] - v[0][1]];
                    let xi = jinv[0][0] * rel[0] + jinv[0][1] * rel[1];
                    let eta = jinv[1][0] * rel[0] + jinv[1][1] * rel[1];
                    basis.eval(xi, eta, &mut vals);
                    let wgt = edge_w[gi] * len / 2.0;

                    match nb {
                        Neighbor::OuterBoundary => {
                            // ghost: u+ = -u- makes the central u flux vanish;
                            // q+ = q-, k+ = k- makes the q flux one-sided.
                            for i in 0..d {
                                for j in 0..d {
                                    for axis in 0..2 {
                                        b[axis][(e * d + i, e * d + j)] +=
                                            k[e] * wgt * vals[i] * vals[j] * normal[axis];
                                    }
                                }
                            }
                        }
                        Neighbor::Element(nbid) => {
                            let nbe = nbid.0 as usize;
                            let wv = mesh.element_vertices(nbe);
                            let njac = [
                                [wv[1][0] - wv[0][0], wv[2][0] - wv[0][0]],
                                [wv[1][1] - wv[0][1], wv[2][1] - wv[0][1]],
                            ];
                            let (njinv, _) = invert2(njac);
                            let nrel = [phys[0] - wv[0][0], phys[1] - wv[0][1]];
                            let nxi = njinv[0][0] * nrel[0] + njinv[0][1] * nrel[1];
                            let neta = njinv[1][0] * nrel[0] + njinv[1][1] * nrel[1];
                            basis.eval(nxi, neta, &mut nb_vals);
                            let keff = harmonic(k[e], k[nbe]);
                            for i in 0..d {
                                for j in 0..d {
                                    for axis in 0..2 {
                                        // central flux of u
                                        a[axis][(e * d + i, e * d + j)] +=
                                            0.5 * wgt * vals[i] * vals[j] * normal[axis];
                                        a[axis][(e * d + i, nbe * d + j)] +=
                                            0.5 * wgt * vals[i] * nb_vals[j] * normal[axis];
                                        // harmonic-weighted central flux of q
                                        b[axis][(e * d + i, e * d + j)] +=
                                            0.5 * keff * wgt * vals[i] * vals[j] * normal[axis];
                                        b[axis][(e * d + i, nbe * d + j)] += 0.5
                                            * keff
                                            * wgt
                                            * vals[i]
                                            * nb_vals[j]
                                            * normal[axis];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        DenseReference { mass, a, b, d }
    }

    pub fn q(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let u = DVector::from_column_slice(u);
        let lu = self.mass.clone().lu();
        let qx = lu.solve(&(&self.a[0] * &u)).expect("mass solve");
        let qy = lu.solve(&(&self.a[1] * &u)).expect("mass solve");
        (qx.as_slice().to_vec(), qy.as_slice().to_vec())
    }

    pub fn rhs(&self, qx: &[f64], qy: &[f64]) -> Vec<f64> {
        let qx = DVector::from_column_slice(qx);
        let qy = DVector::from_column_slice(qy);
        let lu = self.mass.clone().lu();
        let dudt = lu
            .solve(&(&self.b[0] * &qx + &self.b[1] * &qy))
            .expect("mass solve");
        dudt.as_slice().to_vec()
    }

    pub fn deriv(&self, u: &[f64]) -> Vec<f64> {
        let (qx, qy) = self.q(u);
        self.rhs(&qx, &qy)
    }

    /// One classical RK4 step through the dense route.
    pub fn rk4_step(&self, u: &[f64], dt: f64) -> Vec<f64> {
        let k1 = self.deriv(u);
        let u1: Vec<f64> = u.iter().zip(&k1).map(|(&a, &k)| a + 0.5 * dt * k).collect();
        let k2 = self.deriv(&u1);
        let u2: Vec<f64> = u.iter().zip(&k2).map(|(&a, &k)| a + 0.5 * dt * k).collect();
        let k3 = self.deriv(&u2);
        let u3: Vec<f64> = u.iter().zip(&k3).map(|(&a, &k)| a + dt * k).collect();
        let k4 = self.deriv(&u3);
        u.iter()
            .enumerate()
            .map(|(i, &a)| a + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    pub fn dofs(&self) -> usize {
        self.mass.nrows() / self.d * self.d
    }
}

/// Max-norm relative difference.
pub fn rel_inf(actual: &[f64], reference: &[f64]) -> f64 {
    let scale = reference
        .iter()
        .cloned()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    actual
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max)
        / scale
}

/// L2 error of the broken polynomial field against a centered Gaussian of
/// the given variance (degree-6 quadrature).
pub fn l2_error_vs_gaussian(
    state: &eap_core::solver::FieldState,
    mesh: &StructuredTriMesh,
    basis: &Basis,
    var: f64,
) -> f64 {
    let d = basis.node_count();
    let quad = &basis.quad_fine;
    let mut vals = vec![0.0; d];
    let mut err2 = 0.0;
    for e in 0..mesh.element_count() {
        let v = mesh.element_vertices(e);
        let c = &state.coeffs[e * d..(e + 1) * d];
        for (i, &pt) in quad.points.iter().enumerate() {
            basis.eval(pt[0], pt[1], &mut vals);
            let uh: f64 = vals.iter().zip(c).map(|(a, b)| a * b).sum();
            let x = v[0][0] + (v[1][0] - v[0][0]) * pt[0] + (v[2][0] - v[0][0]) * pt[1];
            let y = v[0][1] + (v[1][1] - v[0][1]) * pt[0] + (v[2][1] - v[0][1]) * pt[1];
            let diff = uh - gaussian_density(var, x, y);
            err2 += quad.weights[i] * mesh.h() * mesh.h() * diff * diff;
        }
    }
    err2.sqrt()
}

pub fn gaussian_density(var: f64, x: f64, y: f64) -> f64 {
    (-(x * x + y * y) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var)
}
