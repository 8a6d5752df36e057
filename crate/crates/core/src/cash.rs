//! Learner selection with hyperparameter search: grid, random, successive
//! halving, hyperband, and the test-set oracle.
//!
//! The resource of an evaluation is the stratified fraction of each fold's
//! training side used for fitting.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::encode::Matrix;
use crate::learning::{self, auc, CvData, EvalResult, FitCaps, LearnerSpec};
use crate::seed;
use crate::tabular::Dataset;

/// Anything that can score a learner spec at a given resource.
pub trait Objective: Sync {
    fn cross_validate(&self, spec: &LearnerSpec, resource: f64) -> Result<EvalResult>;

    /// Holdout AUC of `spec` fitted on all training data, if a test set is
    /// attached.
    fn test_auc(&self, spec: &LearnerSpec) -> Result<Option<f64>>;
}

/// Cross-validated objective over a training set, with an optional test
/// set for holdout scoring.
pub struct CvObjective {
    train: CvData,
    test: Option<(Matrix, Vec<u8>)>,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub caps: FitCaps,
}

impl CvObjective {
    pub fn new(train: &Dataset, test: Option<&Dataset>, seed: u64) -> Result<Self> {
        let data = CvData::new(train)?;
        let test = match test {
            Some(t) => {
                train.check_same_schema(t)?;
                let layout = learning::encode::Layout::from_schema(train);
                Some((layout.encode(t)?, t.labels()))
            }
            None => None,
        };
        Ok(CvObjective {
            train: data,
            test,
            folds: 5,
            repeats: 2,
            seed,
            caps: FitCaps::default(),
        })
    }

    pub fn with_caps(mut self, caps: FitCaps) -> Self {
        self.caps = caps;
        self
    }

    pub fn n_predictors(&self) -> usize {
        self.train.n_predictors
    }
}

impl Objective for CvObjective {
    fn cross_validate(&self, spec: &LearnerSpec, resource: f64) -> Result<EvalResult> {
        self.train
            .cross_validate(spec, self.folds, self.repeats, self.seed, resource, self.caps)
    }

    fn test_auc(&self, spec: &LearnerSpec) -> Result<Option<f64>> {
        let Some((tx, ty)) = &self.test else {
            return Ok(None);
        };
        let rows: Vec<usize> = (0..self.train.y.len()).collect();
        let fit_seed = seed::derive_seed(self.seed, &["final", &spec.spec_id.to_string()]);
        let (fit_rows, val_rows) = learning::validation_carve(
            &rows,
            &self.train.y,
            learning::VALIDATION_FRACTION,
            seed::derive_seed(fit_seed, &["valid"]),
        );
        let pick = |r: &[usize]| {
            (
                self.train.x.select(r),
                r.iter().map(|&i| self.train.y[i]).collect::<Vec<u8>>(),
            )
        };
        let (fx, fy) = pick(&fit_rows);
        let (vx, vy) = pick(&val_rows);
        let valid = (!val_rows.is_empty()).then_some((&vx, vy.as_slice()));
        let model = learning::fit_matrix(spec, &fx, &fy, valid, fit_seed, self.caps)?;
        Ok(Some(auc::<f64>(&model.score(tx), ty)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Grid,
    Random,
    Sh,
    Hyperband,
    Oracle,
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::Grid => "grid",
            Optimizer::Random => "random",
            Optimizer::Sh => "sh",
            Optimizer::Hyperband => "hyperband",
            Optimizer::Oracle => "oracle",
        })
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grid" => Ok(Optimizer::Grid),
            "random" => Ok(Optimizer::Random),
            "sh" | "successive_halving" => Ok(Optimizer::Sh),
            "hyperband" | "hb" => Ok(Optimizer::Hyperband),
            "oracle" => Ok(Optimizer::Oracle),
            "bayes" | "bo" => Err(Error::Unsupported(
                "Bayesian optimisation is not implemented; use sh, hyperband, grid, random or oracle".into(),
            )),
            other => Err(Error::InvalidArgument(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// One requested evaluation. `reused` marks a memoized (spec, resource)
/// pair that cost nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub spec_id: usize,
    pub resource_fraction: f64,
    pub cv_auc: f64,
    pub reused: bool,
}

/// One halving round: how many candidates ran and at what resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub candidates: usize,
    pub resource: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub s: usize,
    pub n: usize,
    pub r0: f64,
    pub rounds: Vec<Round>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub optimizer: Optimizer,
    pub best_spec: LearnerSpec,
    pub best_result: EvalResult,
    pub evaluations: Vec<LedgerEntry>,
    /// Σ resource fraction over fresh (non-memoized) evaluations.
    pub total_resource_units: f64,
    pub rounds: Vec<Round>,
    pub brackets: Vec<Bracket>,
}

/// Memoizing evaluator shared by the rounds of one search.
struct Evaluator<'a, O: Objective + ?Sized> {
    obj: &'a O,
    cache: Mutex<HashMap<(usize, u64), EvalResult>>,
    ledger: Mutex<Vec<LedgerEntry>>,
    units: Mutex<f64>,
}

impl<'a, O: Objective + ?Sized> Evaluator<'a, O> {
    fn new(obj: &'a O) -> Self {
        Evaluator {
            obj,
            cache: Mutex::new(HashMap::new()),
            ledger: Mutex::new(Vec::new()),
            units: Mutex::new(0.0),
        }
    }

    /// Evaluates a batch in parallel; results and ledger rows come back in
    /// batch order regardless of scheduling.
    fn batch(&self, specs: &[LearnerSpec], resource: f64) -> Result<Vec<EvalResult>> {
        let key = |s: &LearnerSpec| (s.spec_id, resource.to_bits());
        let fresh: Vec<&LearnerSpec> = {
            let cache = self.cache.lock().expect("cache lock");
            specs.iter().filter(|s| !cache.contains_key(&key(s))).collect()
        };
        let computed: Vec<Result<EvalResult>> =
            fresh.par_iter().map(|s| self.obj.cross_validate(s, resource)).collect();
        let mut cache = self.cache.lock().expect("cache lock");
        let mut fresh_ids = Vec::new();
        for (s, r) in fresh.iter().zip(computed) {
            cache.insert(key(s), r?);
            fresh_ids.push(s.spec_id);
        }
        let mut ledger = self.ledger.lock().expect("ledger lock");
        let mut units = self.units.lock().expect("units lock");
        let mut out = Vec::with_capacity(specs.len());
        for s in specs {
            let r = cache[&key(s)].clone();
            let reused = !fresh_ids.contains(&s.spec_id);
            if !reused {
                *units += resource;
            }
            ledger.push(LedgerEntry {
                spec_id: s.spec_id,
                resource_fraction: resource,
                cv_auc: r.cv_auc_mean,
                reused,
            });
            out.push(r);
        }
        Ok(out)
    }

    fn finish(
        self,
        optimizer: Optimizer,
        best_spec: LearnerSpec,
        mut best_result: EvalResult,
        rounds: Vec<Round>,
        brackets: Vec<Bracket>,
    ) -> Result<SearchOutcome> {
        if best_result.test_auc.is_none() {
            best_result.test_auc = self.obj.test_auc(&best_spec)?;
        }
        Ok(SearchOutcome {
            optimizer,
            best_spec,
            best_result,
            evaluations: self.ledger.into_inner().expect("ledger lock"),
            total_resource_units: self.units.into_inner().expect("units lock"),
            rounds,
            brackets,
        })
    }
}

/// Index of the best result by CV AUC, ties to the lower spec id.
fn argbest(specs: &[LearnerSpec], results: &[EvalResult]) -> usize {
    let mut best = 0;
    for i in 1..specs.len() {
        let (a, b) = (results[i].cv_auc_mean, results[best].cv_auc_mean);
        if a > b || (a == b && specs[i].spec_id < specs[best].spec_id) {
            best = i;
        }
    }
    best
}

fn non_empty(space: &[LearnerSpec]) -> Result<()> {
    if space.is_empty() {
        Err(Error::InvalidArgument("empty search space".into()))
    } else {
        Ok(())
    }
}

pub fn grid_search<O: Objective + ?Sized>(space: &[LearnerSpec], obj: &O) -> Result<SearchOutcome> {
    non_empty(space)?;
    let ev = Evaluator::new(obj);
    let results = ev.batch(space, 1.0)?;
    let b = argbest(space, &results);
    let rounds = vec![Round {
        candidates: space.len(),
        resource: 1.0,
    }];
    ev.finish(Optimizer::Grid, space[b], results[b].clone(), rounds, Vec::new())
}

pub fn random_search<O: Objective + ?Sized>(
    space: &[LearnerSpec],
    obj: &O,
    n_iter: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    non_empty(space)?;
    if n_iter < 1 {
        return Err(Error::InvalidArgument("n_iter must be >= 1".into()));
    }
    let mut rng = seed::rng(seed::derive_seed(seed, &["random-search"]));
    let mut picked = index::sample(&mut rng, space.len(), n_iter.min(space.len())).into_vec();
    picked.sort_unstable();
    let specs: Vec<LearnerSpec> = picked.into_iter().map(|i| space[i]).collect();
    let ev = Evaluator::new(obj);
    let results = ev.batch(&specs, 1.0)?;
    let b = argbest(&specs, &results);
    let rounds = vec![Round {
        candidates: specs.len(),
        resource: 1.0,
    }];
    ev.finish(Optimizer::Random, specs[b], results[b].clone(), rounds, Vec::new())
}

/// Rung `i` of a geometric resource ladder, capped at `max`.
fn rung(min_resource: f64, factor: usize, i: usize, max: f64) -> f64 {
    (min_resource * (factor as f64).powi(i as i32)).min(max)
}

/// Runs the halving rounds; returns (winner, its result at `max_resource`,
/// rounds).
fn halving<O: Objective + ?Sized>(
    ev: &Evaluator<'_, O>,
    candidates: &[LearnerSpec],
    factor: usize,
    start: f64,
    max_resource: f64,
) -> Result<(LearnerSpec, EvalResult, Vec<Round>)> {
    let mut alive = candidates.to_vec();
    let mut rounds = Vec::new();
    if alive.len() == 1 {
        let r = ev.batch(&alive, max_resource)?;
        rounds.push(Round {
            candidates: 1,
            resource: max_resource,
        });
        return Ok((alive[0], r[0].clone(), rounds));
    }
    let mut cap_hits = 0;
    let mut i = 0;
    loop {
        let resource = rung(start, factor, i, max_resource);
        let results = ev.batch(&alive, resource)?;
        rounds.push(Round {
            candidates: alive.len(),
            resource,
        });
        if resource >= max_resource {
            cap_hits += 1;
        }
        let mut order: Vec<usize> = (0..alive.len()).collect();
        order.sort_by(|&a, &b| {
            results[b]
                .cv_auc_mean
                .total_cmp(&results[a].cv_auc_mean)
                .then(alive[a].spec_id.cmp(&alive[b].spec_id))
        });
        if alive.len() == 1 || cap_hits >= 2 {
            let winner = alive[order[0]];
            let full = if resource >= max_resource {
                results[order[0]].clone()
            } else {
                ev.batch(&[winner], max_resource)?.remove(0)
            };
            return Ok((winner, full, rounds));
        }
        let keep = alive.len().div_ceil(factor);
        alive = order[..keep].iter().map(|&k| alive[k]).collect();
        i += 1;
    }
}

pub fn successive_halving<O: Objective + ?Sized>(
    space: &[LearnerSpec],
    obj: &O,
    factor: usize,
    min_resource: f64,
) -> Result<SearchOutcome> {
    non_empty(space)?;
    if factor < 2 {
        return Err(Error::InvalidArgument(format!("factor must be >= 2, got {factor}")));
    }
    if !(min_resource > 0.0 && min_resource <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "min_resource {min_resource} outside (0, 1]"
        )));
    }
    let ev = Evaluator::new(obj);
    let (winner, full, rounds) = halving(&ev, space, factor, min_resource, 1.0)?;
    ev.finish(Optimizer::Sh, winner, full, rounds, Vec::new())
}

/// Largest `s` with `min_resource · factor^s ≤ max_resource`.
pub fn hyperband_s_max(max_resource: f64, min_resource: f64, factor: usize) -> usize {
    let mut s = 0;
    while min_resource * (factor as f64).powi(s as i32 + 1) <= max_resource * (1.0 + 1e-9) {
        s += 1;
    }
    s
}

/// Bracket schedule `(s, n_s, r0)` for `s = s_max … 0`, with
/// `n_s = max(2, factor^s)` capped at the space size.
pub fn hyperband_schedule(
    space_len: usize,
    max_resource: f64,
    min_resource: f64,
    factor: usize,
) -> Vec<(usize, usize, f64)> {
    let s_max = hyperband_s_max(max_resource, min_resource, factor);
    (0..=s_max)
        .rev()
        .map(|s| {
            let n = factor.pow(s as u32).max(2).min(space_len);
            (s, n, max_resource / (factor as f64).powi(s as i32))
        })
        .collect()
}

pub fn hyperband<O: Objective + ?Sized>(
    space: &[LearnerSpec],
    obj: &O,
    max_resource: f64,
    min_resource: f64,
    factor: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    non_empty(space)?;
    if factor < 2 {
        return Err(Error::InvalidArgument(format!("factor must be >= 2, got {factor}")));
    }
    if !(max_resource > 0.0 && max_resource <= 1.0 && min_resource > 0.0 && min_resource <= max_resource) {
        return Err(Error::InvalidArgument(format!(
            "resources must satisfy 0 < min ({min_resource}) <= max ({max_resource}) <= 1"
        )));
    }
    let ev = Evaluator::new(obj);
    let mut best: Option<(LearnerSpec, EvalResult)> = None;
    let mut brackets = Vec::new();
    for (s, n, r0) in hyperband_schedule(space.len(), max_resource, min_resource, factor) {
        let mut rng = seed::rng(seed::derive_seed(seed, &["hyperband", &s.to_string()]));
        let mut picked = index::sample(&mut rng, space.len(), n).into_vec();
        picked.sort_unstable();
        let specs: Vec<LearnerSpec> = picked.into_iter().map(|i| space[i]).collect();
        let (w, r, rounds) = halving(&ev, &specs, factor, r0, max_resource)?;
        brackets.push(Bracket { s, n, r0, rounds });
        let better = match &best {
            None => true,
            Some((bs, br)) => {
                r.cv_auc_mean > br.cv_auc_mean || (r.cv_auc_mean == br.cv_auc_mean && w.spec_id < bs.spec_id)
            }
        };
        if better {
            best = Some((w, r));
        }
    }
    let (w, r) = best.expect("at least one bracket");
    ev.finish(Optimizer::Hyperband, w, r, Vec::new(), brackets)
}

/// Evaluates every spec fully and keeps the one with the best holdout AUC.
/// Unattainable in practice; serves as the comparison baseline.
pub fn oracle_best<O: Objective + ?Sized>(space: &[LearnerSpec], obj: &O) -> Result<SearchOutcome> {
    non_empty(space)?;
    let ev = Evaluator::new(obj);
    let mut results = ev.batch(space, 1.0)?;
    let tests: Vec<Result<Option<f64>>> = space.par_iter().map(|s| obj.test_auc(s)).collect();
    for (r, t) in results.iter_mut().zip(tests) {
        r.test_auc = t?;
    }
    if results.iter().any(|r| r.test_auc.is_none()) {
        return Err(Error::InvalidArgument("oracle search needs a test set".into()));
    }
    let mut b = 0;
    for i in 1..space.len() {
        if results[i].test_auc > results[b].test_auc {
            b = i;
        }
    }
    let rounds = vec![Round {
        candidates: space.len(),
        resource: 1.0,
    }];
    ev.finish(Optimizer::Oracle, space[b], results[b].clone(), rounds, Vec::new())
}

/// Search settings shared by the strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub factor: usize,
    pub min_resource: f64,
    pub random_iter: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            factor: 3,
            min_resource: 1.0 / 9.0,
            random_iter: 20,
        }
    }
}

pub fn run_search<O: Objective + ?Sized>(
    optimizer: Optimizer,
    space: &[LearnerSpec],
    obj: &O,
    settings: SearchSettings,
    seed: u64,
) -> Result<SearchOutcome> {
    match optimizer {
        Optimizer::Grid => grid_search(space, obj),
        Optimizer::Random => random_search(space, obj, settings.random_iter, seed),
        Optimizer::Sh => successive_halving(space, obj, settings.factor, settings.min_resource),
        Optimizer::Hyperband => hyperband(space, obj, 1.0, settings.min_resource, settings.factor, seed),
        Optimizer::Oracle => oracle_best(space, obj),
    }
}

/// Ledger rows as CSV text.
pub fn ledger_csv(outcome: &SearchOutcome, space: &[LearnerSpec]) -> String {
    let by_id: HashMap<usize, &LearnerSpec> = space.iter().map(|s| (s.spec_id, s)).collect();
    let mut out = String::from("spec_id,algorithm,hyperparams,resource_fraction,cv_auc,reused\n");
    for e in &outcome.evaluations {
        let (alg, hyp) = by_id
            .get(&e.spec_id)
            .map(|s| (s.algorithm.to_string(), s.hyper.to_string()))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.spec_id, alg, hyp, e.resource_fraction, e.cv_auc, e.reused
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::learner_space;

    /// cv AUC rises with spec id and ignores the resource.
    struct Monotone;

    impl Objective for Monotone {
        fn cross_validate(&self, spec: &LearnerSpec, resource: f64) -> Result<EvalResult> {
            let v = 0.5 + spec.spec_id as f64 / 1000.0;
            Ok(EvalResult {
                spec_id: spec.spec_id,
                cv_auc_mean: v,
                cv_auc_sd: 0.0,
                fold_scores: vec![v; 10],
                test_auc: None,
                fit_seconds: 0.0,
                resource_fraction: resource,
            })
        }

        fn test_auc(&self, spec: &LearnerSpec) -> Result<Option<f64>> {
            Ok(Some(0.9 - spec.spec_id as f64 / 1000.0))
        }
    }

    fn shape(r: &[Round]) -> Vec<(usize, f64)> {
        r.iter().map(|r| (r.candidates, r.resource)).collect()
    }

    #[test]
    fn sh_schedule_eight_by_two() {
        let space = &learner_space(4)[..8];
        let o = successive_halving(space, &Monotone, 2, 0.25).unwrap();
        assert_eq!(shape(&o.rounds), vec![(8, 0.25), (4, 0.5), (2, 1.0), (1, 1.0)]);
        assert_eq!(o.best_spec.spec_id, 7);
    }

    #[test]
    fn sh_on_full_space() {
        let space = learner_space(4);
        let o = successive_halving(&space, &Monotone, 3, 1.0 / 9.0).unwrap();
        let counts: Vec<usize> = o.rounds.iter().map(|r| r.candidates).collect();
        assert_eq!(counts, vec![60, 20, 7, 3]);
        assert!(o.total_resource_units < 60.0);
        let g = grid_search(&space, &Monotone).unwrap();
        assert_eq!(g.total_resource_units, 60.0);
        assert_eq!(g.evaluations.len(), 60);
        assert_eq!(g.best_spec, o.best_spec);
    }

    #[test]
    fn hyperband_brackets() {
        let sched = hyperband_schedule(60, 1.0, 1.0 / 9.0, 3);
        let got: Vec<(usize, f64)> = sched.iter().map(|&(_, n, r)| (n, r)).collect();
        assert_eq!(got, vec![(9, 1.0 / 9.0), (3, 1.0 / 3.0), (2, 1.0)]);
        let one = &learner_space(4)[..1];
        let o = hyperband(one, &Monotone, 1.0, 1.0 / 9.0, 3, 5).unwrap();
        assert_eq!(o.brackets.len(), 3);
        assert_eq!(o.best_spec.spec_id, 0);
    }

    #[test]
    fn oracle_uses_test_auc() {
        let space = learner_space(4);
        let o = oracle_best(&space, &Monotone).unwrap();
        assert_eq!(o.best_spec.spec_id, 0);
        assert_eq!(o.evaluations.len(), 60);
    }

    #[test]
    fn optimizer_names() {
        assert_eq!("sh".parse::<Optimizer>().unwrap(), Optimizer::Sh);
        assert!(matches!("bayes".parse::<Optimizer>(), Err(Error::Unsupported(_))));
        assert!("nope".parse::<Optimizer>().is_err());
    }
}
