//! Solvers behind one trait, registered by name and picked at run time.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::ccd::{bwcd_solution, ccd, CcdConfig};
use crate::error::{Error, Result};
use crate::erik::{calculate_erik, ErikHyperparams, ErikParams};
use crate::eval::dls_target_correction;
use crate::geom::Quat;
use crate::io::RunConfig;
use crate::jacobian::{iterative_solve, solve_dls, DlsConfig, Inverse, IterativeConfig, JacobianTask, StepMethod};
use crate::skeleton::{Pose, Posture, Skeleton};

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub pose: Pose,
    pub iterations: usize,
    pub converged: bool,
}

pub trait IkSolver: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, skel: &Skeleton, tau: Quat, psi: &Posture) -> Result<SolveOutput>;
    /// Whether the end-point flipped about its own axis scores as equivalent.
    fn symmetric_endpoint(&self) -> bool {
        true
    }
}

pub struct ErikSolver {
    pub hp: ErikHyperparams,
}

impl IkSolver for ErikSolver {
    fn name(&self) -> &str {
        "erik"
    }

    fn solve(&self, skel: &Skeleton, tau: Quat, psi: &Posture) -> Result<SolveOutput> {
        let o = calculate_erik(skel, &ErikParams::new(tau, psi), &self.hp)?;
        Ok(SolveOutput {
            pose: o.solution.pose,
            iterations: o.iterations,
            converged: o.converged,
        })
    }

    fn symmetric_endpoint(&self) -> bool {
        self.hp.ext_symmetric_endpoint
    }
}

/// End-point-first CCD from the zero pose; ignores the posture.
pub struct CcdSolver {
    pub cfg: CcdConfig,
    pub avoid_edges: Option<f64>,
}

impl IkSolver for CcdSolver {
    fn name(&self) -> &str {
        "ccd"
    }

    fn solve(&self, skel: &Skeleton, tau: Quat, _psi: &Posture) -> Result<SolveOutput> {
        let (pose, t) = ccd(&Pose::zero(skel), tau, &self.cfg, skel, self.avoid_edges);
        Ok(SolveOutput {
            converged: t.errors.last().is_some_and(|&e| e <= self.cfg.precision),
            pose,
            iterations: t.iterations,
        })
    }
}

/// Root-first angular sweeps from the posture.
pub struct BwcdSolver {
    pub cfg: CcdConfig,
}

impl IkSolver for BwcdSolver {
    fn name(&self) -> &str {
        "bwcd"
    }

    fn solve(&self, skel: &Skeleton, tau: Quat, psi: &Posture) -> Result<SolveOutput> {
        let mut start = psi.clone();
        for (j, l) in start.joints.iter_mut().zip(&skel.links) {
            j.theta = j.theta.clamp(l.min_theta, l.max_theta);
        }
        start.apply_fk(skel, 0);
        let (pose, t) = bwcd_solution(&start, tau, &self.cfg, skel);
        Ok(SolveOutput {
            converged: t.errors.last().is_some_and(|&e| e <= self.cfg.precision),
            pose,
            iterations: t.iterations,
        })
    }
}

/// Orientation-priority DLS, with or without the posture goal.
pub struct DlsSolver {
    pub name: String,
    pub cfg: DlsConfig,
    pub correct_target: bool,
}

impl IkSolver for DlsSolver {
    fn name(&self) -> &str {
        &self.name
    }

    fn solve(&self, skel: &Skeleton, tau: Quat, psi: &Posture) -> Result<SolveOutput> {
        let target = if self.correct_target {
            dls_target_correction(tau)
        } else {
            tau
        };
        let (pose, t) = solve_dls(skel, target, psi, &self.cfg)?;
        Ok(SolveOutput {
            pose,
            iterations: t.iterations,
            converged: t.best_error <= self.cfg.iterative.error_tolerance,
        })
    }
}

/// Orientation-only Jacobian solver with a fixed inversion rule.
pub struct JacobianSolver {
    pub name: String,
    pub method: StepMethod,
    pub cfg: IterativeConfig,
}

impl IkSolver for JacobianSolver {
    fn name(&self) -> &str {
        &self.name
    }

    fn solve(&self, skel: &Skeleton, tau: Quat, _psi: &Posture) -> Result<SolveOutput> {
        let zero = vec![0.0; skel.n_dofs()];
        let (theta, t) = iterative_solve(
            skel,
            &zero,
            &JacobianTask::Orientation(tau),
            &Inverse::Step(self.method),
            &self.cfg,
        )?;
        Ok(SolveOutput {
            pose: Pose::from_angles(skel, &theta)?,
            iterations: t.iterations,
            converged: t.best_error <= self.cfg.error_tolerance,
        })
    }
}

#[derive(Default)]
pub struct SolverRegistry {
    solvers: BTreeMap<String, Arc<dyn IkSolver>>,
}

impl SolverRegistry {
    pub fn new() -> Self {
        SolverRegistry::default()
    }

    /// erik, ccd, bwcd, dls100/200/400, dls100_nopost, transpose, pinv, sdls.
    pub fn with_defaults(cfg: &RunConfig) -> Self {
        let mut r = SolverRegistry::new();
        r.register(Arc::new(ErikSolver { hp: cfg.erik }));
        r.register(Arc::new(CcdSolver {
            cfg: cfg.erik.ccd,
            avoid_edges: cfg.erik.ext_avoid_edges.then_some(cfg.erik.disturbance),
        }));
        r.register(Arc::new(BwcdSolver { cfg: cfg.erik.ccd }));
        for (name, iters, posture) in [
            ("dls100", 100, true),
            ("dls200", 200, true),
            ("dls400", 400, true),
            ("dls100_nopost", 100, false),
        ] {
            let mut c = cfg.dls;
            c.iterative.max_iterations = iters;
            c.use_posture = posture;
            r.register(Arc::new(DlsSolver {
                name: name.into(),
                cfg: c,
                correct_target: true,
            }));
        }
        for (name, method) in [
            ("transpose", StepMethod::Transpose { alpha: None }),
            ("pinv", StepMethod::Pseudoinverse),
            ("sdls", StepMethod::Sdls {
                gamma_max: std::f64::consts::FRAC_PI_4,
            }),
        ] {
            r.register(Arc::new(JacobianSolver {
                name: name.into(),
                method,
                cfg: cfg.dls.iterative,
            }));
        }
        r
    }

    /// Adds or replaces a solver under its own name.
    pub fn register(&mut self, s: Arc<dyn IkSolver>) {
        self.solvers.insert(s.name().to_string(), s);
    }

    pub fn names(&self) -> Vec<&str> {
        self.solvers.keys().map(String::as_str).collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn IkSolver>> {
        self.solvers
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownSolver(name.to_string()))
    }

    /// Comma-separated names, in the given order.
    pub fn select(&self, list: &str) -> Result<Vec<Arc<dyn IkSolver>>> {
        let names: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if names.is_empty() {
            return Err(Error::InvalidArgument("empty solver list".into()));
        }
        names.into_iter().map(|n| self.get(n)).collect()
    }
}
