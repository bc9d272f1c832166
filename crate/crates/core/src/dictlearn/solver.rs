use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{atom_counts, SolverConfig};
use crate::error::{Error, Result};
use crate::eval::snr_db;
use crate::kspace::{adjoint, AcquiredData, EchoStack, Fft2};
use crate::patches::{aggregate_stacked_on, coverage_on, extract_all_on, PatchGrid};
use crate::prox::{self, relu_in_place, Ista, Regularizer};
use crate::scalar::Scalar;

/// Dictionary chain `D_1 D_2 ... D_L`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepDictionary<T: Scalar> {
    pub layers: Vec<DMatrix<T>>,
}

impl<T: Scalar> DeepDictionary<T> {
    /// Gaussian layers with unit-norm columns, drawn in layer order.
    pub fn random(patch_len: usize, n_layers: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let counts = atom_counts(patch_len, n_layers)?;
        let mut rows = patch_len;
        let mut layers = Vec::with_capacity(n_layers);
        for &atoms in &counts {
            let mut d = DMatrix::from_fn(rows, atoms, |_, _| {
                let v: f64 = StandardNormal.sample(rng);
                T::of(v)
            });
            normalize_columns(&mut d);
            layers.push(d);
            rows = atoms;
        }
        Ok(Self { layers })
    }

    pub fn atom_counts(&self) -> Vec<usize> {
        self.layers.iter().map(|d| d.ncols()).collect()
    }
}

/// Scales columns to unit norm, returning the original norms. Zero columns
/// are left alone and report a norm of one.
fn normalize_columns<T: Scalar>(d: &mut DMatrix<T>) -> Vec<T> {
    d.column_iter_mut()
        .map(|mut col| {
            let n = col.norm();
            if n > T::zero() {
                col /= n;
                n
            } else {
                T::one()
            }
        })
        .collect()
}

/// Value of the split objective, broken into its parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms<T> {
    /// `sum_j ||y_j - R_j F x_j||^2`.
    pub data: T,
    /// Weighted coupling terms; entry 0 is the patch fit `||P X - D_1 Z_1||^2`.
    pub couplings: Vec<T>,
    /// Unweighted `l2,1` or nuclear norm of the codes.
    pub penalty: T,
    /// `data + lambda * (sum couplings + gamma * penalty)`.
    pub total: T,
}

impl<T: Scalar> ObjectiveTerms<T> {
    pub fn coupling_total(&self) -> T {
        self.couplings.iter().fold(T::zero(), |a, &b| a + b)
    }
}

/// Summary of one reconstruction run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconReport<T> {
    pub initial_objective: T,
    /// Objective after each outer iteration.
    pub objective_trace: Vec<T>,
    pub iterations_run: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    pub final_snr_db: Option<f64>,
    pub final_terms: ObjectiveTerms<T>,
    pub config: SolverConfig<T>,
}

/// How sub-problem P1 is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageSolve {
    /// Closed form when patch coverage is uniform, conjugate gradient otherwise.
    Auto,
    ClosedForm,
    ConjugateGradient,
}

#[derive(Clone, Debug)]
enum Coverage<T> {
    Uniform(T),
    Varying(Vec<T>),
}

/// Alternating solver state.
///
/// `codes()[k]` holds the coefficients of layer `k` stacked over patches:
/// `P ~ D_1 Z_1`, `Z_1 ~ D_2 Z_2`, and so on, with the last entry being the
/// regularised code `Z` and every earlier entry a non-negative proxy.
#[derive(Clone)]
pub struct Solver<T: Scalar> {
    cfg: SolverConfig<T>,
    data: AcquiredData<T>,
    fft: Fft2<T>,
    grid: PatchGrid,
    coverage: Coverage<T>,
    x: EchoStack<T>,
    patches: DMatrix<T>,
    dict: DeepDictionary<T>,
    codes: Vec<DMatrix<T>>,
}

impl<T: Scalar> fmt::Debug for Solver<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Solver")
            .field("cfg", &self.cfg)
            .field("dims", &self.x.dims())
            .field("patches", &self.grid.count())
            .field("atoms", &self.dict.atom_counts())
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> Solver<T> {
    /// Initial state: zero-filled images, random unit-column dictionaries,
    /// `Z_1 = relu(D_1^T P)` and each deeper level the least-squares code of
    /// the one above (projected onto `>= 0` for proxies), then
    /// `warmup_sweeps` passes of the dictionary and code updates with the
    /// images held fixed. Without the warm-up the first image update is
    /// driven by the untrained dictionaries and throws away most of the
    /// zero-filled estimate.
    pub fn new(cfg: SolverConfig<T>, data: AcquiredData<T>) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.patch.grid(data.height(), data.width())?;
        let counts = coverage_on(&grid);
        let coverage = if counts.iter().all(|&c| c == counts[0]) {
            Coverage::Uniform(T::of(counts[0] as f64))
        } else {
            Coverage::Varying(counts.iter().map(|&c| T::of(c as f64)).collect())
        };
        let fft = Fft2::new(data.height(), data.width());
        let x = adjoint(&data)?;
        let patches = extract_all_on(&x, &grid);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let dict = DeepDictionary::random(cfg.patch.patch_len(), cfg.layers, &mut rng)?;

        let n_layers = cfg.layers;
        let mut codes = Vec::with_capacity(n_layers);
        let mut first = dict.layers[0].tr_mul(&patches);
        if n_layers > 1 {
            relu_in_place(&mut first);
        }
        codes.push(first);
        for k in 1..n_layers {
            let d = &dict.layers[k];
            let mut z = match prox::ridge_lstsq(d, &codes[k - 1], T::zero()) {
                Ok(z) => z,
                Err(Error::Singular) => prox::ridge_lstsq(d, &codes[k - 1], prox::default_damp(&d.tr_mul(d)))?,
                Err(e) => return Err(e),
            };
            if k + 1 < n_layers {
                relu_in_place(&mut z);
            }
            codes.push(z);
        }
        let mut solver = Self {
            cfg,
            data,
            fft,
            grid,
            coverage,
            x,
            patches,
            dict,
            codes,
        };
        for _ in 0..solver.cfg.warmup_sweeps {
            solver.update_dictionaries()?;
            solver.update_proxies()?;
            solver.update_codes()?;
        }
        Ok(solver)
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.cfg
    }

    pub fn data(&self) -> &AcquiredData<T> {
        &self.data
    }

    pub fn images(&self) -> &EchoStack<T> {
        &self.x
    }

    /// Stacked patches of the current images.
    pub fn patches(&self) -> &DMatrix<T> {
        &self.patches
    }

    pub fn dictionary(&self) -> &DeepDictionary<T> {
        &self.dict
    }

    pub fn codes(&self) -> &[DMatrix<T>] {
        &self.codes
    }

    /// The regularised code `Z` (last level).
    pub fn code(&self) -> &DMatrix<T> {
        self.codes.last().expect("at least one layer")
    }

    /// Columns per patch (`2 * n_echoes`).
    pub fn group_cols(&self) -> usize {
        2 * self.x.n_echoes()
    }

    pub fn patch_grid(&self) -> &PatchGrid {
        &self.grid
    }

    /// Level `k - 1` of the chain, where level `-1` is the patch matrix.
    fn upper(&self, k: usize) -> &DMatrix<T> {
        if k == 0 {
            &self.patches
        } else {
            &self.codes[k - 1]
        }
    }

    /// `sum_i P_i^T D_1 Z_1,i` as an image stack.
    pub fn patch_model_image(&self) -> Result<EchoStack<T>> {
        let model = &self.dict.layers[0] * &self.codes[0];
        aggregate_stacked_on(&model, &self.grid, self.x.n_echoes())
    }

    /// Solves P1 without committing the result.
    pub fn image_update(&self, method: ImageSolve) -> Result<EchoStack<T>> {
        let target = self.patch_model_image()?;
        let lambda = self.cfg.lambda;
        match (method, &self.coverage) {
            (ImageSolve::ClosedForm | ImageSolve::Auto, Coverage::Uniform(c)) => {
                self.images_closed_form(&target, lambda, lambda * *c)
            }
            (ImageSolve::ClosedForm, Coverage::Varying(_)) => Err(Error::InvalidArgument(
                "closed-form image update needs uniform patch coverage".into(),
            )),
            (_, cov) => {
                let weights = match cov {
                    Coverage::Uniform(c) => vec![lambda * *c; self.x.pixels_per_echo()],
                    Coverage::Varying(v) => v.iter().map(|&c| lambda * c).collect(),
                };
                self.images_cg(&target, &weights)
            }
        }
    }

    // Per K-space sample: (m + lambda c) k = m y + lambda F t, m in {0, 1},
    // where t is the aggregated patch model.
    fn images_closed_form(&self, target: &EchoStack<T>, lambda: T, lc: T) -> Result<EchoStack<T>> {
        let (h, w, n) = self.x.dims();
        let mut out = EchoStack::zeros(h, w, n)?;
        for j in 0..n {
            let rows = self.data.masks()[j].row_indicator();
            let y = self.data.zero_filled_spectrum(j);
            let mut k = target.echo(j).to_vec();
            self.fft.forward(&mut k);
            for (r, &sampled) in rows.iter().enumerate() {
                let denom = if sampled { T::one() + lc } else { lc };
                for c in 0..w {
                    let i = r * w + c;
                    let num = if sampled { y[i] + k[i] * lambda } else { k[i] * lambda };
                    k[i] = if denom > T::zero() {
                        num / denom
                    } else {
                        Complex::new(T::zero(), T::zero())
                    };
                }
            }
            self.fft.inverse(&mut k);
            out.echo_mut(j).copy_from_slice(&k);
        }
        Ok(out)
    }

    // Conjugate gradient on (F^H R^T R F + diag(weights)) x = F^H R^T y + lambda t.
    fn images_cg(&self, target: &EchoStack<T>, weights: &[T]) -> Result<EchoStack<T>> {
        let (h, w, n) = self.x.dims();
        let lambda = self.cfg.lambda;
        let tol = T::of(1e-8).max(T::default_epsilon() * T::of(50.0));
        let max_iters = 2000;
        let mut out = self.x.clone();
        for j in 0..n {
            let rows = self.data.masks()[j].row_indicator();
            let apply = |v: &[Complex<T>]| -> Vec<Complex<T>> {
                let mut k = v.to_vec();
                self.fft.forward(&mut k);
                for r in 0..h {
                    if !rows[r] {
                        k[r * w..(r + 1) * w]
                            .iter_mut()
                            .for_each(|z| *z = Complex::new(T::zero(), T::zero()));
                    }
                }
                self.fft.inverse(&mut k);
                for ((kv, &wt), &vv) in k.iter_mut().zip(weights).zip(v) {
                    *kv += vv * wt;
                }
                k
            };
            let mut b = self.data.zero_filled_spectrum(j);
            self.fft.inverse(&mut b);
            // lambda * sum_i P_i^T (D_1 Z_1,i) is the target image itself.
            for (bv, &tv) in b.iter_mut().zip(target.echo(j)) {
                *bv += tv * lambda;
            }
            let b_norm = norm(&b);
            let xj = out.echo_mut(j);
            if b_norm == T::zero() {
                xj.iter_mut().for_each(|v| *v = Complex::new(T::zero(), T::zero()));
                continue;
            }
            let ax = apply(xj);
            let mut r: Vec<Complex<T>> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let mut p = r.clone();
            let mut rr = norm_sqr(&r);
            let mut it = 0;
            while rr.sqrt() > tol * b_norm {
                if it == max_iters {
                    return Err(Error::CgStalled {
                        residual: (rr.sqrt() / b_norm).as_f64(),
                        iterations: it,
                    });
                }
                let ap = apply(&p);
                let pap = p.iter().zip(&ap).fold(T::zero(), |acc, (a, b)| acc + (a.conj() * b).re);
                if !(pap > T::zero()) {
                    break;
                }
                let alpha = rr / pap;
                for ((xv, rv), (pv, apv)) in xj.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
                    *xv += pv * alpha;
                    *rv -= apv * alpha;
                }
                let rr_new = norm_sqr(&r);
                let beta = rr_new / rr;
                for (pv, rv) in p.iter_mut().zip(&r) {
                    *pv = rv + *pv * beta;
                }
                rr = rr_new;
                it += 1;
            }
        }
        Ok(out)
    }

    /// Sub-problem P1: image update, then patches are re-extracted.
    pub fn update_images(&mut self) -> Result<()> {
        self.x = self.image_update(ImageSolve::Auto)?;
        self.patches = extract_all_on(&self.x, &self.grid);
        Ok(())
    }

    /// Unnormalised least-squares solution for dictionary layer `k`:
    /// `argmin_D ||Z_{k-1} - D Z_k||^2 + damp ||D||^2` with the default damping.
    /// Returns `None` when the codes are identically zero.
    pub fn dictionary_least_squares(&self, k: usize) -> Result<Option<DMatrix<T>>> {
        let codes = &self.codes[k];
        if codes.iter().all(|v| *v == T::zero()) {
            return Ok(None);
        }
        prox::ridge_right_default(self.upper(k), codes).map(Some)
    }

    /// Sub-problems P2 to P4, followed by unit-normalising the columns of
    /// `D_1` with the inverse scaling applied to the rows of `Z_1`.
    ///
    /// The rescaling keeps `D_1 Z_1` fixed. With one layer `Z_1` is also the
    /// penalised code, so the rescaled rows can raise the penalty; in that
    /// case the update is kept only if it does not raise the top-level terms.
    pub fn update_dictionaries(&mut self) -> Result<()> {
        let guard = if self.cfg.layers == 1 {
            Some((
                self.dict.layers[0].clone(),
                self.codes[0].clone(),
                self.top_level_cost()?,
            ))
        } else {
            None
        };
        for k in 0..self.cfg.layers {
            if let Some(d) = self.dictionary_least_squares(k)? {
                self.dict.layers[k] = d;
            }
            if k == 0 {
                let norms = normalize_columns(&mut self.dict.layers[0]);
                for (mut row, &s) in self.codes[0].row_iter_mut().zip(&norms) {
                    row *= s;
                }
            }
        }
        if let Some((d, z, before)) = guard {
            if self.top_level_cost()? > before {
                self.dict.layers[0] = d;
                self.codes[0] = z;
            }
        }
        Ok(())
    }

    // Patch fit plus penalty of a one-layer model.
    fn top_level_cost(&self) -> Result<T> {
        let r = &self.patches - &self.dict.layers[0] * &self.codes[0];
        let pen = if self.cfg.gamma > T::zero() {
            prox::penalty(&self.codes[0], self.group_cols(), self.cfg.regularizer)?
        } else {
            T::zero()
        };
        Ok(self.cfg.coupling_weight(0) * r.norm_squared() + self.cfg.gamma * pen)
    }

    /// Unconstrained minimiser of the two coupling terms containing proxy
    /// level `k`, before projection onto `>= 0`.
    pub fn proxy_least_squares(&self, k: usize) -> Result<DMatrix<T>> {
        if k + 1 >= self.cfg.layers {
            return Err(Error::InvalidArgument(format!("level {k} is not a proxy")));
        }
        let w_lo = self.cfg.coupling_weight(k);
        let w_hi = self.cfg.coupling_weight(k + 1);
        let d = &self.dict.layers[k];
        let mut gram = d.tr_mul(d) * w_lo;
        for i in 0..gram.nrows() {
            gram[(i, i)] += w_hi;
        }
        let rhs = d.tr_mul(self.upper(k)) * w_lo + (&self.dict.layers[k + 1] * &self.codes[k + 1]) * w_hi;
        let chol = gram.cholesky().ok_or(Error::Singular)?;
        Ok(chol.solve(&rhs))
    }

    /// Sub-problems P5, P6 (and the extra proxy of a 4-layer chain), top down.
    ///
    /// Each proxy becomes the projection of its unconstrained minimiser onto
    /// `>= 0`. The projection is not the constrained minimiser, so any column
    /// where it would raise the two coupling terms keeps its previous value.
    pub fn update_proxies(&mut self) -> Result<()> {
        for k in 0..self.cfg.layers.saturating_sub(1) {
            let mut z = self.proxy_least_squares(k)?;
            relu_in_place(&mut z);
            let new_cost = self.proxy_column_costs(k, &z);
            let old_cost = self.proxy_column_costs(k, &self.codes[k]);
            for (j, (n, o)) in new_cost.iter().zip(&old_cost).enumerate() {
                if n > o {
                    z.set_column(j, &self.codes[k].column(j));
                }
            }
            self.codes[k] = z;
        }
        Ok(())
    }

    // Per-column value of the two coupling terms that contain proxy level `k`.
    fn proxy_column_costs(&self, k: usize, z: &DMatrix<T>) -> Vec<T> {
        let w_lo = self.cfg.coupling_weight(k);
        let w_hi = self.cfg.coupling_weight(k + 1);
        let lo = self.upper(k) - &self.dict.layers[k] * z;
        let hi = z - &self.dict.layers[k + 1] * &self.codes[k + 1];
        lo.column_iter()
            .zip(hi.column_iter())
            .map(|(a, b)| w_lo * a.norm_squared() + w_hi * b.norm_squared())
            .collect()
    }

    /// Sub-problem P7: proximal gradient on the last level, warm-started.
    pub fn update_codes(&mut self) -> Result<()> {
        let k = self.cfg.layers - 1;
        let out = Ista::new(&self.dict.layers[k], self.upper(k), self.cfg.regularizer)
            .gamma(self.cfg.gamma)
            .weight(self.cfg.coupling_weight(k))
            .group_cols(self.group_cols())
            .run(Some(self.codes[k].clone()), self.cfg.inner_iters)?;
        self.codes[k] = out.solution;
        Ok(())
    }

    pub fn objective(&self) -> Result<ObjectiveTerms<T>> {
        let data = self.data.residual_sqr(&self.x, &self.fft)?;
        let couplings = (0..self.cfg.layers)
            .map(|k| {
                let r = self.upper(k) - &self.dict.layers[k] * &self.codes[k];
                self.cfg.coupling_weight(k) * r.norm_squared()
            })
            .collect::<Vec<_>>();
        let penalty = if self.cfg.gamma > T::zero() {
            prox::penalty(self.code(), self.group_cols(), self.cfg.regularizer)?
        } else {
            T::zero()
        };
        let coupled = couplings.iter().fold(T::zero(), |a, &b| a + b);
        let total = data + self.cfg.lambda * (coupled + self.cfg.gamma * penalty);
        Ok(ObjectiveTerms {
            data,
            couplings,
            penalty,
            total,
        })
    }

    fn ensure_finite(&self, subproblem: &'static str, iteration: usize) -> Result<()> {
        let ok = match subproblem {
            "P1" => self.x.is_finite(),
            "P2-P4" => self.dict.layers.iter().all(|d| d.iter().all(|v| v.is_finite())),
            _ => self.codes.iter().all(|z| z.iter().all(|v| v.is_finite())),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Diverged { subproblem, iteration })
        }
    }

    /// One outer iteration: P1, P2-P4, P5-P6, P7.
    pub fn sweep(&mut self, iteration: usize) -> Result<()> {
        self.update_images()?;
        self.ensure_finite("P1", iteration)?;
        self.update_dictionaries()?;
        self.ensure_finite("P2-P4", iteration)?;
        self.update_proxies()?;
        self.ensure_finite("P5-P6", iteration)?;
        self.update_codes()?;
        self.ensure_finite("P7", iteration)
    }

    /// Runs the outer loop to completion.
    pub fn run(mut self, truth: Option<&EchoStack<T>>) -> Result<(EchoStack<T>, ReconReport<T>)> {
        let report = self.iterate(truth)?;
        Ok((self.x, report))
    }

    /// Runs the outer loop in place, leaving the final state inspectable.
    pub fn iterate(&mut self, truth: Option<&EchoStack<T>>) -> Result<ReconReport<T>> {
        let start = Instant::now();
        let initial = self.objective()?;
        if !initial.total.is_finite() {
            return Err(Error::Diverged {
                subproblem: "initialisation",
                iteration: 0,
            });
        }
        let mut trace = Vec::with_capacity(self.cfg.outer_iters);
        let mut prev = initial.total;
        let mut converged = false;
        let mut terms = initial.clone();
        for it in 0..self.cfg.outer_iters {
            self.sweep(it)?;
            terms = self.objective()?;
            if !terms.total.is_finite() {
                return Err(Error::Diverged {
                    subproblem: "objective",
                    iteration: it,
                });
            }
            trace.push(terms.total);
            let scale = if prev.abs() > T::zero() { prev.abs() } else { T::one() };
            if (prev - terms.total).abs() / scale < self.cfg.tol {
                converged = true;
                break;
            }
            prev = terms.total;
        }
        let final_snr_db = truth.map(|t| snr_db(&self.x, t)).transpose()?;
        let report = ReconReport {
            initial_objective: initial.total,
            iterations_run: trace.len(),
            objective_trace: trace,
            converged,
            wall_time_s: start.elapsed().as_secs_f64(),
            final_snr_db,
            final_terms: terms,
            config: self.cfg.clone(),
        };
        Ok(report)
    }
}

fn norm_sqr<T: Scalar>(v: &[Complex<T>]) -> T {
    v.iter().fold(T::zero(), |a, z| a + z.norm_sqr())
}

fn norm<T: Scalar>(v: &[Complex<T>]) -> T {
    norm_sqr(v).sqrt()
}

/// Deep dictionary reconstruction (row-sparse or low-rank, any layer count).
pub fn solve<T: Scalar>(
    d: &AcquiredData<T>,
    cfg: &SolverConfig<T>,
    truth: Option<&EchoStack<T>>,
) -> Result<(EchoStack<T>, ReconReport<T>)> {
    Solver::new(cfg.clone(), d.clone())?.run(truth)
}

/// Shallow group-sparse dictionary learning: one complete dictionary,
/// `l2,1`-regularised codes, no proxies and no sign constraints.
pub fn solve_shallow<T: Scalar>(
    d: &AcquiredData<T>,
    cfg: &SolverConfig<T>,
    truth: Option<&EchoStack<T>>,
) -> Result<(EchoStack<T>, ReconReport<T>)> {
    let cfg = shallow_config(cfg);
    solve(d, &cfg, truth)
}

/// `cfg` restricted to the one-layer row-sparse model.
pub fn shallow_config<T: Scalar>(cfg: &SolverConfig<T>) -> SolverConfig<T> {
    SolverConfig {
        layers: 1,
        regularizer: Regularizer::RowSparse,
        ..cfg.clone()
    }
}
