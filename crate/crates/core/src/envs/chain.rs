//! Planar articulated chain dynamics in generalized coordinates.
//!
//! The body is a kinematic tree: a floating base with three degrees of
//! freedom `(x, z, angle)` plus one revolute joint per child link. Each
//! integration substep assembles the exact mass matrix from link Jacobians,
//! the exact velocity-product (centrifugal/Coriolis) bias from a
//! zero-acceleration propagation pass, applies gravity, actuation, joint
//! damping, soft joint limits and penalty ground contact, solves
//! `M qdd = Q` by Cholesky and advances with semi-implicit Euler.
//!
//! The plane is `(x, z)` with `x` forward and `z` up; angles are measured
//! counterclockwise, the ground is `z = 0`.

#[derive(Clone, Copy, Debug, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub z: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, z: 0.0 };

    pub fn new(x: f64, z: f64) -> Self {
        Vec2 { x, z }
    }

    /// 90-degree counterclockwise rotation (`omega x r` for planar bodies).
    pub fn perp(self) -> Vec2 {
        Vec2 { x: -self.z, z: self.x }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2 { x: self.x * s, z: self.z * s }
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2 { x: self.x + o.x, z: self.z + o.z }
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2 { x: self.x - o.x, z: self.z - o.z }
    }

    /// Rotate by the angle whose cosine/sine are given.
    pub fn rot(self, cs: (f64, f64)) -> Vec2 {
        let (c, s) = cs;
        Vec2 { x: c * self.x - s * self.z, z: s * self.x + c * self.z }
    }
}

/// Rigid link of the tree. The base link (index 0) owns the floating dofs
/// `q[0..3]`; every other link adds one revolute joint at `anchor` in the
/// parent frame.
#[derive(Clone, Debug)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    /// Generalized-coordinate index of this link's angle dof.
    pub dof: usize,
    /// Joint position in the parent frame (unused for the base).
    pub anchor: Vec2,
    pub com: Vec2,
    pub mass: f64,
    pub inertia: f64,
    /// Actuated joints receive the torque at this action index.
    pub torque_index: Option<usize>,
    /// Soft joint limit (lo, hi) in radians.
    pub limit: Option<(f64, f64)>,
    /// Contact points in the link frame.
    pub contacts: Vec<Vec2>,
    /// Whether this link's contact state is exposed as an observation flag.
    pub foot_sensor: bool,
}

/// Contact / integration constants.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct ContactParams {
    pub stiffness: f64,
    pub damping: f64,
    pub friction_slope: f64,
    pub friction_mu: f64,
    pub joint_damping: f64,
    pub limit_stiffness: f64,
    pub limit_damping: f64,
    pub gravity: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            stiffness: 6.0e3,
            damping: 80.0,
            friction_slope: 300.0,
            friction_mu: 0.9,
            joint_damping: 0.2,
            limit_stiffness: 60.0,
            limit_damping: 2.0,
            gravity: 9.81,
        }
    }
}

/// World-frame pose and velocity of one link.
#[derive(Clone, Copy, Debug, Default)]
pub struct Frame {
    pub origin: Vec2,
    pub angle: f64,
    pub cs: (f64, f64),
    pub vel: Vec2,
    pub omega: f64,
}

#[derive(Clone, Debug)]
pub struct Chain {
    pub links: Vec<Link>,
    /// 3 base dofs + one per child link.
    pub n_q: usize,
    pub n_act: usize,
    /// Per link, the list of angle dofs on its path to the base.
    paths: Vec<Vec<usize>>,
}

impl Chain {
    pub fn new(links: Vec<Link>) -> Self {
        assert!(!links.is_empty());
        assert!(links[0].parent.is_none(), "link 0 must be the base");
        let n_q = 3 + links.len() - 1;
        let n_act = links.iter().filter(|l| l.torque_index.is_some()).count();
        let mut paths: Vec<Vec<usize>> = Vec::with_capacity(links.len());
        for (i, link) in links.iter().enumerate() {
            let mut path = match link.parent {
                Some(p) => paths[p].clone(),
                None => vec![],
            };
            path.push(link.dof);
            paths.push(path);
            if i > 0 {
                assert_eq!(links[i].dof, 2 + i, "child dofs must be dense");
                assert!(link.parent.unwrap() < i, "parents precede children");
            } else {
                assert_eq!(link.dof, 2);
            }
        }
        Chain { links, n_q, n_act, paths }
    }

    /// Forward kinematics for all links.
    pub fn kinematics(&self, q: &[f64], qd: &[f64]) -> Vec<Frame> {
        let mut frames = vec![Frame::default(); self.links.len()];
        for (i, link) in self.links.iter().enumerate() {
            if let Some(p) = link.parent {
                let pf = frames[p];
                let r = link.anchor.rot(pf.cs);
                let angle = pf.angle + q[link.dof];
                frames[i] = Frame {
                    origin: pf.origin.add(r),
                    angle,
                    cs: (angle.cos(), angle.sin()),
                    vel: pf.vel.add(r.perp().scale(pf.omega)),
                    omega: pf.omega + qd[link.dof],
                };
            } else {
                let angle = q[2];
                frames[i] = Frame {
                    origin: Vec2::new(q[0], q[1]),
                    angle,
                    cs: (angle.cos(), angle.sin()),
                    vel: Vec2::new(qd[0], qd[1]),
                    omega: qd[2],
                };
            }
        }
        frames
    }

    /// World position and velocity of a point fixed in link `li`.
    pub fn point_state(&self, frames: &[Frame], li: usize, local: Vec2) -> (Vec2, Vec2) {
        let f = &frames[li];
        let r = local.rot(f.cs);
        (f.origin.add(r), f.vel.add(r.perp().scale(f.omega)))
    }

    /// Translational Jacobian columns of a world point on link `li`.
    /// `jac[j]` is `d p / d q_j` as a `Vec2`.
    fn point_jacobian(&self, frames: &[Frame], li: usize, p: Vec2, jac: &mut [Vec2]) {
        for col in jac.iter_mut() {
            *col = Vec2::ZERO;
        }
        jac[0] = Vec2::new(1.0, 0.0);
        jac[1] = Vec2::new(0.0, 1.0);
        for &dof in &self.paths[li] {
            // joint world position: base angle rotates about the base origin,
            // a revolute joint about its child-link origin
            let w = if dof == 2 {
                frames[0].origin
            } else {
                frames[dof - 2].origin
            };
            jac[dof] = p.sub(w).perp();
        }
    }

    /// `M(q)` from `sum_i m_i J_i^T J_i + I_i w_i w_i^T`.
    fn mass_matrix(&self, frames: &[Frame], m_out: &mut [f64]) {
        let n = self.n_q;
        m_out.fill(0.0);
        let mut jac = vec![Vec2::ZERO; n];
        for (i, link) in self.links.iter().enumerate() {
            let com_w = frames[i].origin.add(link.com.rot(frames[i].cs));
            self.point_jacobian(frames, i, com_w, &mut jac);
            for r in 0..n {
                let jr = jac[r];
                if jr.x == 0.0 && jr.z == 0.0 {
                    continue;
                }
                for c in r..n {
                    m_out[r * n + c] += link.mass * jr.dot(jac[c]);
                }
            }
            // angular part: w has 1s exactly on the path dofs
            for &r in &self.paths[i] {
                for &c in &self.paths[i] {
                    if c >= r {
                        m_out[r * n + c] += link.inertia;
                    }
                }
            }
        }
        // mirror the upper triangle
        for r in 0..n {
            for c in 0..r {
                m_out[r * n + c] = m_out[c * n + r];
            }
        }
    }

    /// Velocity-product generalized force `h` with `qdd = 0` (planar chains
    /// have zero angular bias, so only centripetal terms appear).
    fn bias_force(&self, frames: &[Frame], h: &mut [f64]) {
        h.fill(0.0);
        let n = self.n_q;
        let mut abias = vec![Vec2::ZERO; self.links.len()];
        for (i, link) in self.links.iter().enumerate() {
            if let Some(p) = link.parent {
                let r = link.anchor.rot(frames[p].cs);
                abias[i] = abias[p].sub(r.scale(frames[p].omega * frames[p].omega));
            }
        }
        let mut jac = vec![Vec2::ZERO; n];
        for (i, link) in self.links.iter().enumerate() {
            let rc = link.com.rot(frames[i].cs);
            let acom = abias[i].sub(rc.scale(frames[i].omega * frames[i].omega));
            if acom.x == 0.0 && acom.z == 0.0 {
                continue;
            }
            let com_w = frames[i].origin.add(rc);
            self.point_jacobian(frames, i, com_w, &mut jac);
            for j in 0..n {
                h[j] += link.mass * jac[j].dot(acom);
            }
        }
    }

    /// One semi-implicit Euler substep. `torques` has one entry per actuated
    /// joint. Returns per-link "touching ground" flags.
    pub fn substep(
        &self,
        q: &mut [f64],
        qd: &mut [f64],
        torques: &[f64],
        params: &ContactParams,
        dt: f64,
    ) -> Vec<bool> {
        let n = self.n_q;
        let frames = self.kinematics(q, qd);
        let mut m = vec![0.0; n * n];
        self.mass_matrix(&frames, &mut m);
        let mut rhs = vec![0.0; n];
        self.bias_force(&frames, &mut rhs);
        for v in rhs.iter_mut() {
            *v = -*v;
        }

        let mut jac = vec![Vec2::ZERO; n];
        let mut touching = vec![false; self.links.len()];
        for (i, link) in self.links.iter().enumerate() {
            // gravity through the COM Jacobian
            let com_w = frames[i].origin.add(link.com.rot(frames[i].cs));
            self.point_jacobian(&frames, i, com_w, &mut jac);
            let fg = -link.mass * params.gravity;
            for j in 0..n {
                rhs[j] += jac[j].z * fg;
            }

            // penalty contact at each declared point
            for &cp in &link.contacts {
                let (p, pdot) = self.point_state(&frames, i, cp);
                if p.z >= 0.0 {
                    continue;
                }
                touching[i] = true;
                let fz = (params.stiffness * (-p.z) - params.damping * pdot.z).max(0.0);
                let cap = params.friction_mu * fz;
                let fx = (-params.friction_slope * pdot.x).clamp(-cap, cap);
                self.point_jacobian(&frames, i, p, &mut jac);
                for j in 0..n {
                    rhs[j] += jac[j].x * fx + jac[j].z * fz;
                }
            }

            // actuation, viscous joint damping, soft limits
            if let Some(ti) = link.torque_index {
                rhs[link.dof] += torques[ti];
            }
            if link.parent.is_some() {
                rhs[link.dof] -= params.joint_damping * qd[link.dof];
                if let Some((lo, hi)) = link.limit {
                    let qj = q[link.dof];
                    if qj > hi {
                        rhs[link.dof] += -params.limit_stiffness * (qj - hi) - params.limit_damping * qd[link.dof];
                    } else if qj < lo {
                        rhs[link.dof] += -params.limit_stiffness * (qj - lo) - params.limit_damping * qd[link.dof];
                    }
                }
            }
        }

        let qdd = cholesky_solve(&mut m, &mut rhs, n);
        for j in 0..n {
            qd[j] += dt * qdd[j];
        }
        for j in 0..n {
            q[j] += dt * qd[j];
        }
        touching
    }

    /// Kinetic plus gravitational potential energy (contact springs ignored;
    /// used by tests to detect integrator blow-up).
    pub fn mechanical_energy(&self, q: &[f64], qd: &[f64], params: &ContactParams) -> f64 {
        let frames = self.kinematics(q, qd);
        let mut e = 0.0;
        for (i, link) in self.links.iter().enumerate() {
            let rc = link.com.rot(frames[i].cs);
            let cvel = frames[i].vel.add(rc.perp().scale(frames[i].omega));
            let com_z = frames[i].origin.z + rc.z;
            e += 0.5 * link.mass * cvel.dot(cvel);
            e += 0.5 * link.inertia * frames[i].omega * frames[i].omega;
            e += link.mass * params.gravity * com_z;
        }
        e
    }

    /// Whole-body center-of-mass velocity.
    pub fn com_velocity(&self, frames: &[Frame]) -> Vec2 {
        let mut mv = Vec2::ZERO;
        let mut mass = 0.0;
        for (i, link) in self.links.iter().enumerate() {
            let rc = link.com.rot(frames[i].cs);
            let cvel = frames[i].vel.add(rc.perp().scale(frames[i].omega));
            mv = mv.add(cvel.scale(link.mass));
            mass += link.mass;
        }
        mv.scale(1.0 / mass)
    }

    /// Lowest contact-point height at configuration `q` (used to place the
    /// body exactly on the ground at reset).
    pub fn min_contact_height(&self, q: &[f64]) -> f64 {
        let qd = vec![0.0; self.n_q];
        let frames = self.kinematics(q, &qd);
        let mut min_z = f64::INFINITY;
        for (i, link) in self.links.iter().enumerate() {
            for &cp in &link.contacts {
                let (p, _) = self.point_state(&frames, i, cp);
                min_z = min_z.min(p.z);
            }
        }
        min_z
    }
}

/// Solve `M x = b` for symmetric positive-definite `M` (destroys both).
fn cholesky_solve(m: &mut [f64], b: &mut [f64], n: usize) -> Vec<f64> {
    // in-place LL^T factorization
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= m[i * n + k] * m[j * n + k];
            }
            if i == j {
                debug_assert!(s > 0.0, "mass matrix not positive definite");
                m[i * n + i] = s.sqrt();
            } else {
                m[i * n + j] = s / m[j * n + j];
            }
        }
    }
    // forward substitution L y = b
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= m[i * n + k] * b[k];
        }
        b[i] = s / m[i * n + i];
    }
    // back substitution L^T x = y
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= m[k * n + i] * x[k];
        }
        x[i] = s / m[i * n + i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-link free chain high above the ground (no contacts declared).
    fn free_chain() -> Chain {
        let base = Link {
            name: "base".into(),
            parent: None,
            dof: 2,
            anchor: Vec2::ZERO,
            com: Vec2::new(0.0, 0.2),
            mass: 1.5,
            inertia: 0.02,
            torque_index: None,
            limit: None,
            contacts: vec![],
            foot_sensor: false,
        };
        let rod = Link {
            name: "rod".into(),
            parent: Some(0),
            dof: 3,
            anchor: Vec2::new(0.0, -0.1),
            com: Vec2::new(0.0, -0.5),
            mass: 1.0,
            inertia: 1.0 / 12.0,
            torque_index: None,
            limit: None,
            contacts: vec![],
            foot_sensor: false,
        };
        Chain::new(vec![base, rod])
    }

    #[test]
    fn free_fall_matches_gravity() {
        let chain = free_chain();
        let params = ContactParams::default();
        let mut q = vec![0.0, 10.0, 0.0, 0.0];
        let mut qd = vec![0.0; 4];
        let dt = 1e-3;
        for _ in 0..100 {
            chain.substep(&mut q, &mut qd, &[], &params, dt);
        }
        // v = g t after 0.1 s; the aligned chain feels no joint torque
        assert!((qd[1] + 9.81 * 0.1).abs() < 1e-9, "vz = {}", qd[1]);
        assert!(qd[0].abs() < 1e-12 && qd[2].abs() < 1e-12);
    }

    #[test]
    fn tumbling_chain_conserves_energy() {
        // with damping off and no contact, a wrong mass matrix or a wrong
        // velocity-product bias shows up as secular energy drift
        let chain = free_chain();
        let params = ContactParams { joint_damping: 0.0, ..ContactParams::default() };
        let mut q = vec![0.0, 50.0, 0.3, 0.7];
        let mut qd = vec![0.4, 1.0, 2.0, -3.0];
        let e0 = chain.mechanical_energy(&q, &qd, &params);
        let dt = 1e-4;
        let mut max_drift: f64 = 0.0;
        for _ in 0..20_000 {
            chain.substep(&mut q, &mut qd, &[], &params, dt);
            let e = chain.mechanical_energy(&q, &qd, &params);
            max_drift = max_drift.max((e - e0).abs());
        }
        assert!(max_drift < 0.02 * e0.abs().max(1.0), "energy drift {max_drift} from {e0}");
    }

    #[test]
    fn linear_momentum_evolves_by_external_force_only() {
        // internal joint motion must not change the horizontal momentum
        let chain = free_chain();
        let params = ContactParams { joint_damping: 0.0, ..ContactParams::default() };
        let mut q = vec![0.0, 50.0, 0.0, 1.2];
        let mut qd = vec![0.0, 0.0, 0.0, 4.0];
        let v0 = chain.com_velocity(&chain.kinematics(&q, &qd));
        let dt = 1e-4;
        for _ in 0..10_000 {
            chain.substep(&mut q, &mut qd, &[], &params, dt);
        }
        let v = chain.com_velocity(&chain.kinematics(&q, &qd));
        assert!((v.x - v0.x).abs() < 1e-3, "vx drift {} from {}", v.x - v0.x, v0.x);
        assert!((v.z - (v0.z - 9.81 * 1.0)).abs() < 1e-3, "vz = {}", v.z);
    }

    #[test]
    fn contact_penalty_supports_a_resting_block() {
        let block = Link {
            name: "block".into(),
            parent: None,
            dof: 2,
            anchor: Vec2::ZERO,
            com: Vec2::ZERO,
            mass: 2.0,
            inertia: 0.05,
            torque_index: None,
            limit: None,
            contacts: vec![Vec2::new(-0.1, -0.05), Vec2::new(0.1, -0.05)],
            foot_sensor: false,
        };
        let chain = Chain::new(vec![block]);
        let params = ContactParams::default();
        let mut q = vec![0.0, 0.05, 0.0];
        let mut qd = vec![0.0; 3];
        let dt = 1.0 / 240.0;
        for _ in 0..2_000 {
            chain.substep(&mut q, &mut qd, &[], &params, dt);
        }
        // settled just below the rest height, not sunk, not bouncing
        assert!(q[1] > 0.0 && q[1] <= 0.05, "height {}", q[1]);
        assert!(qd[1].abs() < 1e-4, "vz {}", qd[1]);
        assert!(q[2].abs() < 1e-9);
    }
}
