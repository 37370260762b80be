//! Shared helpers for the integration tests: fixture loading, random
//! instance generators and a dense QP oracle that shares no code with the
//! crate's solver.

#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pjplan::boundary::{BoundEntry, BoundSource, PathBoundary};
use pjplan::geometry::{FrenetState, GuideLinePoint, VehicleParams};
use pjplan::pipeline::Scenario;
use pjplan::pjpath::PjConfig;
use pjplan::smoother::{GuideLine, RawLine, SmootherConfig};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn load_fixture(name: &str) -> Scenario {
    Scenario::load(&fixtures_dir().join(format!("{name}.json")))
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Every fixture, sorted by name.
pub fn all_fixtures() -> Vec<Scenario> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixtures_dir())
        .expect("fixtures directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Scenario::load(p).unwrap()).collect()
}

/// Fixtures whose corridor is open end to end.
pub const BLOCKED_FIXTURES: &[&str] = &["fully_blocked_single_lane"];

pub fn plannable_fixtures() -> Vec<Scenario> {
    all_fixtures()
        .into_iter()
        .filter(|s| !BLOCKED_FIXTURES.contains(&s.name.as_str()))
        .collect()
}

/// minimize ½xᵀHx + gᵀx  subject to  E x = f,  C x ≤ d.
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub e: DMatrix<f64>,
    pub f: DVector<f64>,
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
}

pub struct OracleSolution {
    pub x: DVector<f64>,
    /// Indices of inequality rows held at their bounds.
    pub active: Vec<usize>,
}

impl DenseQp {
    pub fn new(n: usize) -> Self {
        Self {
            h: DMatrix::zeros(n, n),
            g: DVector::zeros(n),
            e: DMatrix::zeros(0, n),
            f: DVector::zeros(0),
            c: DMatrix::zeros(0, n),
            d: DVector::zeros(0),
        }
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn add_eq(&mut self, row: &[(usize, f64)], rhs: f64) {
        let k = self.e.nrows();
        self.e = self.e.clone().insert_row(k, 0.0);
        for &(j, v) in row {
            self.e[(k, j)] += v;
        }
        self.f = self.f.clone().insert_row(k, rhs);
    }

    pub fn add_le(&mut self, row: &[(usize, f64)], rhs: f64) {
        let k = self.c.nrows();
        self.c = self.c.clone().insert_row(k, 0.0);
        for &(j, v) in row {
            self.c[(k, j)] += v;
        }
        self.d = self.d.clone().insert_row(k, rhs);
    }

    /// Adds w·(Σ coeffs·x − target)² to the objective.
    pub fn add_square(&mut self, coeffs: &[(usize, f64)], target: f64, w: f64) {
        for &(a, va) in coeffs {
            for &(b, vb) in coeffs {
                self.h[(a, b)] += 2.0 * w * va * vb;
            }
            self.g[a] -= 2.0 * w * va * target;
        }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.h * x)[(0, 0)] + self.g.dot(x)
    }

    /// Equality-constrained minimizer with the given inequality rows held
    /// tight: (x, equality multipliers, active multipliers).
    fn kkt_solve(&self, active: &[usize]) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let n = self.n();
        let me = self.e.nrows();
        let k = me + active.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.h);
        rhs.rows_mut(0, n).copy_from(&(-&self.g));
        for r in 0..me {
            for j in 0..n {
                kkt[(n + r, j)] = self.e[(r, j)];
                kkt[(j, n + r)] = self.e[(r, j)];
            }
            rhs[n + r] = self.f[r];
        }
        for (slot, &i) in active.iter().enumerate() {
            for j in 0..n {
                kkt[(n + me + slot, j)] = self.c[(i, j)];
                kkt[(j, n + me + slot)] = self.c[(i, j)];
            }
            rhs[n + me + slot] = self.d[i];
        }
        let sol = kkt.lu().solve(&rhs)?;
        Some((
            sol.rows(0, n).into_owned(),
            sol.rows(n, me).into_owned(),
            sol.rows(n + me, active.len()).into_owned(),
        ))
    }

    /// Primal-dual interior point on the dense normal equations.
    pub fn solve_interior_point(&self) -> DVector<f64> {
        let n = self.n();
        let mi = self.c.nrows();
        let me = self.e.nrows();
        let mut x = DVector::zeros(n);
        let mut y = DVector::zeros(me);
        let mut lam = DVector::from_element(mi, 1.0);
        let mut s = DVector::from_element(mi, 1.0);
        for _ in 0..200 {
            let rd = &self.h * &x + &self.g + self.e.transpose() * &y + self.c.transpose() * &lam;
            let re = &self.e * &x - &self.f;
            let ri = &self.c * &x + &s - &self.d;
            let mu = if mi > 0 { s.dot(&lam) / mi as f64 } else { 0.0 };
            let res = rd.amax().max(re.amax()).max(ri.amax());
            if res < 1e-12 && mu < 1e-13 {
                break;
            }
            let sigma = 0.1;
            let w = lam.component_div(&s);
            let mut m = self.h.clone();
            for i in 0..mi {
                let row = self.c.row(i);
                m += w[i] * row.transpose() * row;
            }
            let t: DVector<f64> = DVector::from_fn(mi, |i, _| {
                (sigma * mu - lam[i] * s[i] + lam[i] * ri[i]) / s[i]
            });
            let mut kkt = DMatrix::zeros(n + me, n + me);
            kkt.view_mut((0, 0), (n, n)).copy_from(&m);
            for r in 0..me {
                for j in 0..n {
                    kkt[(n + r, j)] = self.e[(r, j)];
                    kkt[(j, n + r)] = self.e[(r, j)];
                }
            }
            let mut rhs = DVector::zeros(n + me);
            rhs.rows_mut(0, n)
                .copy_from(&(-&rd - self.c.transpose() * &t));
            rhs.rows_mut(n, me).copy_from(&(-&re));
            let sol = kkt
                .lu()
                .solve(&rhs)
                .expect("interior-point system is nonsingular");
            let dx = sol.rows(0, n).into_owned();
            let dy = sol.rows(n, me).into_owned();
            let ds = -&ri - &self.c * &dx;
            let dlam = DVector::from_fn(mi, |i, _| {
                (sigma * mu - lam[i] * s[i] - lam[i] * ds[i]) / s[i]
            });
            let mut alpha: f64 = 1.0;
            for i in 0..mi {
                if ds[i] < 0.0 {
                    alpha = alpha.min(-0.995 * s[i] / ds[i]);
                }
                if dlam[i] < 0.0 {
                    alpha = alpha.min(-0.995 * lam[i] / dlam[i]);
                }
            }
            x += alpha * dx;
            y += alpha * dy;
            s += alpha * ds;
            lam += alpha * dlam;
        }
        x
    }

    /// Interior point to locate the active set, then an exact KKT solve on
    /// it. The second route is kept only if it is feasible and its
    /// multipliers have the right sign.
    pub fn solve(&self) -> OracleSolution {
        let x_ip = self.solve_interior_point();
        let slack = &self.d - &self.c * &x_ip;
        let active: Vec<usize> = (0..self.c.nrows()).filter(|&i| slack[i] < 1e-7).collect();
        if let Some((x, _, lam)) = self.kkt_solve(&active) {
            let feasible = (&self.c * &x - &self.d).iter().all(|v| *v <= 1e-9)
                && (&self.e * &x - &self.f).amax() <= 1e-9;
            if feasible && lam.iter().all(|v| *v >= -1e-9) {
                return OracleSolution { x, active };
            }
        }
        OracleSolution { x: x_ip, active }
    }
}

/// A random piecewise-jerk instance that is feasible by construction: a
/// reference trajectory is integrated from random jerks and every bound is
/// loosened around it by a random margin.
pub struct PathInstance {
    pub bounds: PathBoundary,
    pub init: FrenetState,
    pub line: GuideLine,
    pub cfg: PjConfig,
    pub vehicle: VehicleParams,
    pub kappa: Vec<f64>,
}

pub fn random_path_instance(seed: u64, max_stations: usize) -> PathInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_stations);
    let ds: f64 = rng.gen_range(0.3..1.0);
    let vehicle = VehicleParams::default();
    let kmax = vehicle.kappa_max();
    let mut l = vec![rng.gen_range(-0.5..0.5)];
    let mut dl = vec![rng.gen_range(-0.2..0.2)];
    let mut ddl = vec![rng.gen_range(-0.05..0.05)];
    for i in 0..n - 1 {
        let j: f64 = rng.gen_range(-0.05..0.05);
        // Constant-jerk integration over one step.
        l.push(l[i] + dl[i] * ds + ddl[i] * ds * ds / 2.0 + j * ds.powi(3) / 6.0);
        dl.push(dl[i] + ddl[i] * ds + j * ds * ds / 2.0);
        ddl.push(ddl[i] + j * ds);
    }
    // Curvatures that the reference trajectory satisfies, sometimes nearly
    // tight.
    let kappa: Vec<f64> = l
        .iter()
        .map(|&li| loop {
            let k: f64 = rng.gen_range(-0.19..0.19);
            if kmax * k * li <= kmax - k.abs() {
                break k;
            }
        })
        .collect();
    let entries = l
        .iter()
        .map(|&li| BoundEntry {
            l_min: li - rng.gen_range(0.0..0.08),
            l_max: li + rng.gen_range(0.0..0.08),
            source: BoundSource::Lane,
        })
        .collect();
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cfg = PjConfig {
        ds,
        w_l: rng.gen_range(0.1..10.0),
        w_dl: rng.gen_range(0.1..50.0),
        w_ddl: rng.gen_range(1.0..1000.0),
        w_dddl: rng.gen_range(10.0..1e4),
        w_obs: if rng.gen_bool(0.5) {
            rng.gen_range(0.0..5.0)
        } else {
            0.0
        },
        dl_bound: max_abs(&dl) + rng.gen_range(0.001..0.1),
        ddl_bound: max_abs(&ddl) + rng.gen_range(0.001..0.02),
    };
    let points = kappa
        .iter()
        .enumerate()
        .map(|(i, &k)| GuideLinePoint {
            s: i as f64 * ds,
            x: i as f64 * ds,
            y: 0.0,
            theta: 0.0,
            kappa: k,
            dkappa: 0.0,
        })
        .collect();
    PathInstance {
        bounds: PathBoundary {
            s0: 0.0,
            ds,
            entries,
        },
        init: FrenetState {
            s: 0.0,
            l: l[0],
            dl: dl[0],
            ddl: ddl[0],
        },
        line: GuideLine::new(ds, points).expect("straight guide line"),
        cfg,
        vehicle,
        kappa,
    }
}

/// The piecewise-jerk problem written out term by term; variables are
/// (l, l′, l″) per station.
pub fn path_oracle(inst: &PathInstance) -> DenseQp {
    let n = inst.bounds.len();
    let (vl, vdl, vddl) = (|i: usize| 3 * i, |i: usize| 3 * i + 1, |i: usize| 3 * i + 2);
    let cfg = &inst.cfg;
    let ds = cfg.ds;
    let kmax = inst.vehicle.kappa_max();
    let mut qp = DenseQp::new(3 * n);
    for (i, e) in inst.bounds.entries.iter().enumerate() {
        qp.add_square(&[(vl(i), 1.0)], 0.0, cfg.w_l);
        qp.add_square(&[(vdl(i), 1.0)], 0.0, cfg.w_dl);
        qp.add_square(&[(vddl(i), 1.0)], 0.0, cfg.w_ddl);
        if cfg.w_obs > 0.0 {
            qp.add_square(&[(vl(i), 1.0)], 0.5 * (e.l_min + e.l_max), cfg.w_obs);
        }
        qp.add_le(&[(vl(i), 1.0)], e.l_max);
        qp.add_le(&[(vl(i), -1.0)], -e.l_min);
        qp.add_le(&[(vdl(i), 1.0)], cfg.dl_bound);
        qp.add_le(&[(vdl(i), -1.0)], cfg.dl_bound);
        qp.add_le(&[(vddl(i), 1.0)], cfg.ddl_bound);
        qp.add_le(&[(vddl(i), -1.0)], cfg.ddl_bound);
        // κ_r / (1 − κ_r l) ≤ κ_max  ⇔  κ_max·κ_r·l ≤ κ_max − |κ_r|
        let k = inst.kappa[i];
        qp.add_le(&[(vl(i), kmax * k)], kmax - k.abs());
    }
    for i in 0..n - 1 {
        // jerk j = (l″ᵢ₊₁ − l″ᵢ)/Δs held constant over the step
        qp.add_square(
            &[(vddl(i + 1), 1.0 / ds), (vddl(i), -1.0 / ds)],
            0.0,
            cfg.w_dddl,
        );
        qp.add_eq(
            &[
                (vdl(i + 1), 1.0),
                (vdl(i), -1.0),
                (vddl(i), -ds),
                (vddl(i + 1), -ds / 2.0),
                (vddl(i), ds / 2.0),
            ],
            0.0,
        );
        qp.add_eq(
            &[
                (vl(i + 1), 1.0),
                (vl(i), -1.0),
                (vdl(i), -ds),
                (vddl(i), -ds * ds / 2.0),
                (vddl(i + 1), -ds * ds / 6.0),
                (vddl(i), ds * ds / 6.0),
            ],
            0.0,
        );
    }
    qp.add_eq(&[(vl(0), 1.0)], inst.init.l);
    qp.add_eq(&[(vdl(0), 1.0)], inst.init.dl);
    qp.add_eq(&[(vddl(0), 1.0)], inst.init.ddl);
    qp
}

pub struct SmoothInstance {
    pub raw: RawLine,
    pub cfg: SmootherConfig,
}

pub fn random_smooth_instance(seed: u64, max_points: usize) -> SmoothInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=max_points);
    let h: f64 = rng.gen_range(0.5..2.0);
    let points = (0..n)
        .map(|i| {
            [
                i as f64 * h + rng.gen_range(-0.15..0.15) * h,
                rng.gen_range(-0.2..0.2) * h,
            ]
        })
        .collect();
    SmoothInstance {
        raw: RawLine::new(points).expect("distinct points"),
        cfg: SmootherConfig {
            w_smooth: rng.gen_range(1.0..1000.0),
            w_dev: rng.gen_range(0.1..10.0),
            w_length: rng.gen_range(0.0..5.0),
            w_end_heading: 0.0,
            deviation_bound: rng.gen_range(0.01..0.3),
            ..SmootherConfig::default()
        },
    }
}

/// Smoothing objective over (x₀, y₀, x₁, y₁, …) with interior boxes and
/// pinned endpoints.
pub fn smooth_oracle(inst: &SmoothInstance) -> DenseQp {
    let p0 = &inst.raw.points;
    let n = p0.len();
    let c = &inst.cfg;
    let mut qp = DenseQp::new(2 * n);
    for k in 0..2 {
        let v = |i: usize| 2 * i + k;
        for i in 1..n - 1 {
            qp.add_square(
                &[(v(i - 1), 1.0), (v(i), -2.0), (v(i + 1), 1.0)],
                0.0,
                c.w_smooth,
            );
        }
        for (i, p) in p0.iter().enumerate() {
            qp.add_square(&[(v(i), 1.0)], p[k], c.w_dev);
        }
        for i in 0..n - 1 {
            qp.add_square(&[(v(i + 1), 1.0), (v(i), -1.0)], 0.0, c.w_length);
        }
        for (i, p) in p0.iter().enumerate() {
            if i == 0 || i == n - 1 {
                qp.add_eq(&[(v(i), 1.0)], p[k]);
            } else {
                qp.add_le(&[(v(i), 1.0)], p[k] + c.deviation_bound);
                qp.add_le(&[(v(i), -1.0)], -(p[k] - c.deviation_bound));
            }
        }
    }
    qp
}

/// Largest |κ| by the turning angle between consecutive chords over the
/// mean chord length.
pub fn finite_difference_kappa(points: &[[f64; 2]]) -> Vec<f64> {
    points
        .windows(3)
        .map(|w| {
            let a = (w[1][1] - w[0][1]).atan2(w[1][0] - w[0][0]);
            let b = (w[2][1] - w[1][1]).atan2(w[2][0] - w[1][0]);
            let mut d = b - a;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            let len = 0.5
                * ((w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])
                    + (w[2][0] - w[1][0]).hypot(w[2][1] - w[1][1]));
            d / len
        })
        .collect()
}
