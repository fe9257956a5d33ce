//! Lagrange basis and precomputed reference data on the two element shapes.
//!
//! All elements are affine images of the reference triangle with vertices
//! (0,0), (1,0), (0,1). Because the mesh has exactly two congruent shapes
//! (lower/upper triangle of a pixel, see [`crate::mesh`]), every matrix the
//! solver needs is precomputed here once, h-independent; physical scaling
//! (`h^2` for the mass matrix, `h` for derivative and edge terms) is applied
//! by the solver kernels.

use crate::error::{Error, Result};

/// Lower/upper triangle unit-pixel vertices, counterclockwise.
pub const SHAPE_VERTICES: [[[f64; 2]; 3]; 2] = [
    [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]],
    [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
];

/// For my `(shape, edge)`, the matching local edge index on the neighbor.
/// The neighbor's shape is always the opposite one.
pub const NEIGHBOR_EDGE: [[usize; 3]; 2] = [[1, 2, 0], [2, 0, 1]];

const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Interior quadrature on the reference triangle; weights include the
/// reference area, so `∫_ref f ≈ Σ w_i f(x_i)`.
#[derive(Debug, Clone)]
pub struct TriQuadrature {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

fn push_perm3(pts: &mut Vec<[f64; 2]>, ws: &mut Vec<f64>, a: f64, b: f64, w: f64) {
    // barycentric (λ1, λ2, λ3) -> (ξ, η) = (λ2, λ3)
    for lam in [[a, b, b], [b, a, b], [b, b, a]] {
        pts.push([lam[1], lam[2]]);
        ws.push(w * 0.5);
    }
}

fn push_perm6(pts: &mut Vec<[f64; 2]>, ws: &mut Vec<f64>, a: f64, b: f64, c: f64, w: f64) {
    for lam in [
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ] {
        pts.push([lam[1], lam[2]]);
        ws.push(w * 0.5);
    }
}

impl TriQuadrature {
    /// Symmetric Gaussian rules exact for polynomials of the given total
    /// degree (3, 6 and 12 points for degrees 2, 4, 6).
    pub fn with_degree(degree: usize) -> TriQuadrature {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let degree = match degree {
            0..=2 => {
                push_perm3(&mut points, &mut weights, 2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0);
                2
            }
            3..=4 => {
                push_perm3(
                    &mut points,
                    &mut weights,
                    0.108103018168070,
                    0.445948490915965,
                    0.223381589678011,
                );
                push_perm3(
                    &mut points,
                    &mut weights,
                    0.816847572980459,
                    0.091576213509771,
                    0.109951743655322,
                );
                4
            }
            5..=6 => {
                push_perm3(
                    &mut points,
                    &mut weights,
                    0.873821971016996,
                    0.063089014491502,
                    0.050844906370207,
                );
                push_perm3(
                    &mut points,
                    &mut weights,
                    0.501426509658179,
                    0.249286745170910,
                    0.116786275726379,
                );
                push_perm6(
                    &mut points,
                    &mut weights,
                    0.636502499121399,
                    0.310352451033785,
                    0.053145049844816,
                    0.082851075618374,
                );
                6
            }
            d => panic!("no interior rule of degree {d}"),
        };
        TriQuadrature {
            points,
            weights,
            degree,
        }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 0.577_350_269_189_625_7;
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = 0.774_596_669_241_483_4;
            (
                vec![-a, 0.0, a],
                vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0],
            )
        }
        4 => {
            let a = 0.339_981_043_584_856_26;
            let b = 0.861_136_311_594_052_6;
            let wa = 0.652_145_154_862_546_1;
            let wb = 0.347_854_845_137_453_85;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        5 => {
            let a = 0.538_469_310_105_683_1;
            let b = 0.906_179_845_938_664;
            let wa = 0.478_628_670_499_366_47;
            let wb = 0.236_926_885_056_189_08;
            (
                vec![-b, -a, 0.0, a, b],
                vec![wb, wa, 128.0 / 225.0, wa, wb],
            )
        }
        _ => panic!("no Gauss-Legendre table for n = {n}"),
    }
}

/// Per-(shape, edge) data for flux integrals.
#[derive(Debug, Clone)]
pub struct EdgeRule {
    /// Outward unit normal.
    pub normal: [f64; 2],
    /// Edge length divided by h (1 or √2).
    pub rel_len: f64,
    /// Gauss weights (sum 2); the physical Jacobian `len/2` is applied by
    /// the caller.
    pub weights: Vec<f64>,
    /// `trace_self[g * d + j]`: own basis at quadrature point g.
    pub trace_self: Vec<f64>,
    /// `trace_nb[g * d + j]`: neighbor basis at the same physical point
    /// (the neighbor traverses the shared edge in the opposite direction).
    pub trace_nb: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Basis {
    order: usize,
    d: usize,
    nodes: Vec<[f64; 2]>,
    exps: Vec<(u32, u32)>,
    /// `coef[m * d + j]`: monomial-m coefficient of basis function j.
    coef: Vec<f64>,
    /// Rule exact for degree 2p, used for the reference matrices.
    pub quad: TriQuadrature,
    /// Degree-6 rule used for projections and field moments.
    pub quad_fine: TriQuadrature,
    /// `∫_ref N_i N_j` (d×d, symmetric positive definite).
    pub mass_ref: Vec<f64>,
    pub mass_inv_ref: Vec<f64>,
    /// `∫_ref N_i`.
    pub node_integral_ref: Vec<f64>,
    /// `deriv_hat[shape][axis][i * d + j] = ∫_ref (∂_axis N_i) N_j` with the
    /// shape's inverse-Jacobian direction folded in; multiply by h for the
    /// physical `∫ (∂ N_i) N_j dx`.
    pub deriv_hat: [[Vec<f64>; 2]; 2],
    pub edges: [[EdgeRule; 3]; 2],
    /// Basis values at the pixel center (diagonal midpoint) per shape.
    pub center_trace: [Vec<f64>; 2],
}

impl Basis {
    pub fn new(order: usize) -> Result<Basis> {
        if !(1..=3).contains(&order) {
            return Err(Error::param(
                "order",
                format!("basis order must be 1, 2 or 3, got {order}"),
            ));
        }
        let p = order;
        let d = (p + 1) * (p + 2) / 2;

        let mut nodes = Vec::with_capacity(d);
        let mut exps = Vec::with_capacity(d);
        for j in 0..=p {
            for i in 0..=(p - j) {
                nodes.push([i as f64 / p as f64, j as f64 / p as f64]);
                exps.push((i as u32, j as u32));
            }
        }

        // Vandermonde V[i][m] = monomial_m(node_i); columns of V^-1 are the
        // monomial coefficients of the Lagrange functions.
        let mut vand = vec![0.0; d * d];
        for (i, node) in nodes.iter().enumerate() {
            for (m, &(a, b)) in exps.iter().enumerate() {
                vand[i * d + m] = node[0].powi(a as i32) * node[1].powi(b as i32);
            }
        }
        let vinv = invert_dense(d, &vand);
        // coef[m * d + j] = (V^-1)[m][j]
        let coef = vinv;

        let quad = TriQuadrature::with_degree(2 * p);
        let quad_fine = TriQuadrature::with_degree(6);

        let mut basis = Basis {
            order,
            d,
            nodes,
            exps,
            coef,
            quad,
            quad_fine,
            mass_ref: vec![0.0; d * d],
            mass_inv_ref: Vec::new(),
            node_integral_ref: vec![0.0; d],
            deriv_hat: Default::default(),
            edges: Default::default(),
            center_trace: Default::default(),
        };
        basis.precompute(p)?;
        Ok(basis)
    }

    fn precompute(&mut self, p: usize) -> Result<()> {
        let d = self.d;
        let mut k_xi = vec![0.0; d * d];
        let mut k_eta = vec![0.0; d * d];
        let mut vals = vec![0.0; d];
        let mut grads = vec![[0.0; 2]; d];
        let quad = self.quad.clone();
        for (q, &pt) in quad.points.iter().enumerate() {
            let w = quad.weights[q];
            self.eval(pt[0], pt[1], &mut vals);
            self.eval_grad(pt[0], pt[1], &mut grads);
            for i in 0..d {
                self.node_integral_ref[i] += w * vals[i];
                for j in 0..d {
                    self.mass_ref[i * d + j] += w * vals[i] * vals[j];
                    k_xi[i * d + j] += w * grads[i][0] * vals[j];
                    k_eta[i * d + j] += w * grads[i][1] * vals[j];
                }
            }
        }
        self.mass_inv_ref = invert_dense(d, &self.mass_ref);

        let combine = |ca: f64, a: &[f64], cb: f64, b: &[f64]| -> Vec<f64> {
            a.iter()
                .zip(b)
                .map(|(&x, &y)| ca * x + cb * y)
                .collect()
        };
        // Inverse-Jacobian rows (times h): lower shape maps x = x0 + h(ξ+η),
        // y = y0 + hη; upper shape maps x = x0 + hξ, y = y0 + h(ξ+η).
        self.deriv_hat[0] = [
            combine(1.0, &k_xi, 0.0, &k_eta),
            combine(-1.0, &k_xi, 1.0, &k_eta),
        ];
        self.deriv_hat[1] = [
            combine(1.0, &k_xi, -1.0, &k_eta),
            combine(0.0, &k_xi, 1.0, &k_eta),
        ];

        let (gl_t, gl_w) = gauss_legendre(p + 1);
        let g = gl_t.len();
        for shape in 0..2 {
            let verts = SHAPE_VERTICES[shape];
            for edge in 0..3 {
                let a_phys = verts[edge];
                let b_phys = verts[(edge + 1) % 3];
                let ex = b_phys[0] - a_phys[0];
                let ey = b_phys[1] - a_phys[1];
                let rel_len = (ex * ex + ey * ey).sqrt();
                let normal = [ey / rel_len, -ex / rel_len];

                let a_ref = REF_VERTICES[edge];
                let b_ref = REF_VERTICES[(edge + 1) % 3];
                let nb_edge = NEIGHBOR_EDGE[shape][edge];
                let na_ref = REF_VERTICES[nb_edge];
                let nb_ref = REF_VERTICES[(nb_edge + 1) % 3];

                let mut trace_self = vec![0.0; g * self.d];
                let mut trace_nb = vec![0.0; g * self.d];
                for (gi, &t) in gl_t.iter().enumerate() {
                    let s = (t + 1.0) / 2.0;
                    let xi = a_ref[0] + s * (b_ref[0] - a_ref[0]);
                    let eta = a_ref[1] + s * (b_ref[1] - a_ref[1]);
                    self.eval(xi, eta, &mut vals);
                    trace_self[gi * self.d..(gi + 1) * self.d].copy_from_slice(&vals);
                    // Same physical point seen from the neighbor: parameter -t.
                    let s = (-t + 1.0) / 2.0;
                    let xi = na_ref[0] + s * (nb_ref[0] - na_ref[0]);
                    let eta = na_ref[1] + s * (nb_ref[1] - na_ref[1]);
                    self.eval(xi, eta, &mut vals);
                    trace_nb[gi * self.d..(gi + 1) * self.d].copy_from_slice(&vals);
                }
                self.edges[shape][edge] = EdgeRule {
                    normal,
                    rel_len,
                    weights: gl_w.clone(),
                    trace_self,
                    trace_nb,
                };
            }
        }

        // Pixel center = diagonal midpoint: ref (0, 1/2) on the lower shape,
        // ref (1/2, 0) on the upper shape.
        self.eval(0.0, 0.5, &mut vals);
        self.center_trace[0] = vals.clone();
        self.eval(0.5, 0.0, &mut vals);
        self.center_trace[1] = vals.clone();
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Nodes per element, `(p+1)(p+2)/2`.
    pub fn node_count(&self) -> usize {
        self.d
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// Evaluates all basis functions at a reference point.
    pub fn eval(&self, xi: f64, eta: f64, out: &mut [f64]) {
        let d = self.d;
        out[..d].fill(0.0);
        for (m, &(a, b)) in self.exps.iter().enumerate() {
            let mono = xi.powi(a as i32) * eta.powi(b as i32);
            for j in 0..d {
                out[j] += self.coef[m * d + j] * mono;
            }
        }
    }

    /// Reference-space gradients of all basis functions.
    pub fn eval_grad(&self, xi: f64, eta: f64, out: &mut [[f64; 2]]) {
        let d = self.d;
        for o in out[..d].iter_mut() {
            *o = [0.0, 0.0];
        }
        for (m, &(a, b)) in self.exps.iter().enumerate() {
            let (a, b) = (a as i32, b as i32);
            let dxi = if a > 0 {
                a as f64 * xi.powi(a - 1) * eta.powi(b)
            } else {
                0.0
            };
            let deta = if b > 0 {
                b as f64 * xi.powi(a) * eta.powi(b - 1)
            } else {
                0.0
            };
            for j in 0..d {
                let c = self.coef[m * d + j];
                out[j][0] += c * dxi;
                out[j][1] += c * deta;
            }
        }
    }
}

impl Default for EdgeRule {
    fn default() -> Self {
        EdgeRule {
            normal: [0.0, 0.0],
            rel_len: 0.0,
            weights: Vec::new(),
            trace_self: Vec::new(),
            trace_nb: Vec::new(),
        }
    }
}

/// Maps pixel-local physical coordinates (in units of h) to reference
/// coordinates of the given shape.
#[inline]
pub fn local_to_ref(shape: usize, lx: f64, ly: f64) -> [f64; 2] {
    if shape == 0 {
        [lx - ly, ly]
    } else {
        [lx, ly - lx]
    }
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
/// Panics on a singular matrix; only used on Vandermonde and mass matrices
/// of valid bases (n ≤ 10).
fn invert_dense(n: usize, a: &[f64]) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                m[i * n + col]
                    .abs()
                    .partial_cmp(&m[j * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        assert!(m[pivot * n + col].abs() > 1e-14, "singular matrix");
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
                inv.swap(col * n + k, pivot * n + k);
            }
        }
        let diag = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= diag;
            inv[col * n + k] /= diag;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[row * n + k] -= f * m[col * n + k];
                inv[row * n + k] -= f * inv[col * n + k];
            }
        }
    }
    inv
}
