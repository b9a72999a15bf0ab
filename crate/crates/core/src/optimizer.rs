//! Multistart candidate-set point exchange maximizing a compound criterion.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::criteria::{CriterionConfig, CriterionValue, Evaluator, FTable};
use crate::error::{Error, Result};
use crate::model::{CandidateSet, Design, ModelSpec};
use crate::scalar::Scalar;

/// Relative margin a swap must clear to count as a strict improvement; also
/// the tie window inside which the earlier candidate wins.
const IMPROVEMENT_RTOL: f64 = 1e-12;

/// Configuration of one exchange search.
#[derive(Debug, Clone)]
pub struct SearchConfig<S: Scalar = f64> {
    /// Run count of the designs searched, `n >= p`.
    pub n: usize,
    /// Independent random starts.
    pub starts: usize,
    /// Cap on full exchange passes within one start.
    pub max_passes: usize,
    /// Seed; every start derives its own RNG stream from `(seed, start)`.
    pub seed: u64,
    pub candidates: CandidateSet<S>,
    pub criterion: CriterionConfig<S>,
    /// Emit one line per finished start on standard error.
    pub log_progress: bool,
}

impl<S: Scalar> SearchConfig<S> {
    pub fn new(n: usize, candidates: CandidateSet<S>, criterion: CriterionConfig<S>) -> Self {
        SearchConfig {
            n,
            starts: 100,
            max_passes: 50,
            seed: 0,
            candidates,
            criterion,
            log_progress: false,
        }
    }
}

/// Outcome of an exchange search.
#[derive(Debug, Clone)]
pub struct SearchResult<S: Scalar = f64> {
    pub best: Design<S>,
    pub value: CriterionValue<S>,
    /// Best criterion value of each start, in start order (zero when a start
    /// never reached a defined value).
    pub history: Vec<S>,
    /// Total criterion evaluations across all starts.
    pub evaluations: u64,
}

/// Ordering key for designs during the search. Undefined states (singular
/// information matrix, or zero pure-error df under an active interval
/// component) are repaired greedily: any defined state beats them, and among
/// undefined states more pure-error df wins, then higher rank of `X'X`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Score<S> {
    Undefined { d: usize, rank: usize },
    Defined(S),
}

impl<S: Scalar> Score<S> {
    fn improves(self, over: Score<S>) -> bool {
        match (self, over) {
            (Score::Defined(a), Score::Defined(b)) => a > b * S::of_f64(1.0 + IMPROVEMENT_RTOL),
            (Score::Defined(_), Score::Undefined { .. }) => true,
            (Score::Undefined { .. }, Score::Defined(_)) => false,
            (Score::Undefined { d: d1, rank: r1 }, Score::Undefined { d: d2, rank: r2 }) => {
                (d1, r1) > (d2, r2)
            }
        }
    }

    /// Exact comparison used when merging starts; equal keeps the earlier.
    fn merge_beats(self, over: Score<S>) -> bool {
        match (self, over) {
            (Score::Defined(a), Score::Defined(b)) => a > b,
            (Score::Defined(_), Score::Undefined { .. }) => true,
            (Score::Undefined { .. }, Score::Defined(_)) => false,
            (Score::Undefined { d: d1, rank: r1 }, Score::Undefined { d: d2, rank: r2 }) => {
                (d1, r1) > (d2, r2)
            }
        }
    }

    fn value(self) -> S {
        match self {
            Score::Defined(v) => v,
            Score::Undefined { .. } => S::zero(),
        }
    }
}

struct StartOutcome<S: Scalar> {
    score: Score<S>,
    indices: Vec<usize>,
    passes: usize,
    evaluations: u64,
    /// Incumbent value after every accepted exchange (monotone by
    /// construction; asserted in tests).
    #[allow(dead_code)]
    trace: Vec<S>,
}

/// Replicate bookkeeping over candidate indices. Candidate points are
/// distinct, so the index is the replicate key.
struct Counts {
    counts: Vec<u32>,
    distinct: usize,
    n: usize,
}

impl Counts {
    fn new(ncand: usize, indices: &[usize]) -> Self {
        let mut counts = vec![0u32; ncand];
        let mut distinct = 0;
        for &i in indices {
            if counts[i] == 0 {
                distinct += 1;
            }
            counts[i] += 1;
        }
        Counts {
            counts,
            distinct,
            n: indices.len(),
        }
    }

    fn d(&self) -> usize {
        self.n - self.distinct
    }

    /// Pure-error df after swapping one run from `old` to `new`.
    fn d_after_swap(&self, old: usize, new: usize) -> usize {
        if old == new {
            return self.d();
        }
        let mut distinct = self.distinct;
        if self.counts[old] == 1 {
            distinct -= 1;
        }
        if self.counts[new] == 0 {
            distinct += 1;
        }
        self.n - distinct
    }

    fn apply_swap(&mut self, old: usize, new: usize) {
        if old == new {
            return;
        }
        self.counts[old] -= 1;
        if self.counts[old] == 0 {
            self.distinct -= 1;
        }
        if self.counts[new] == 0 {
            self.distinct += 1;
        }
        self.counts[new] += 1;
    }
}

struct SearchContext<'a, S: Scalar> {
    evaluator: &'a Evaluator<S>,
    ftable: &'a FTable<S>,
    outer: &'a [DMatrix<S>],
    n: usize,
    p: usize,
}

impl<S: Scalar> SearchContext<'_, S> {
    fn score(&self, a: &DMatrix<S>, d: usize, need_rank: bool) -> Score<S> {
        let cv = self.evaluator.evaluate_gram(a, self.n, d, self.ftable);
        if cv.defined {
            Score::Defined(cv.value)
        } else {
            let rank = if need_rank {
                let scale = (a.trace().as_f64() / self.p as f64).max(1.0);
                a.clone().rank(S::of_f64(1e-9 * scale))
            } else {
                0
            };
            Score::Undefined { d, rank }
        }
    }

    #[allow(clippy::needless_range_loop)] // run positions are read and written through the index
    fn run_start(&self, seed: u64, start: usize, max_passes: usize) -> StartOutcome<S> {
        let ncand = self.outer.len();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(start as u64);
        let mut indices: Vec<usize> = (0..self.n).map(|_| rng.random_range(0..ncand)).collect();

        let mut a = DMatrix::<S>::zeros(self.p, self.p);
        for &i in &indices {
            a += &self.outer[i];
        }
        let mut counts = Counts::new(ncand, &indices);
        let mut evaluations = 1u64;
        let mut cur = self.score(&a, counts.d(), true);
        let mut trace = vec![cur.value()];

        let mut base = DMatrix::<S>::zeros(self.p, self.p);
        let mut trial = DMatrix::<S>::zeros(self.p, self.p);
        let mut passes = 0;
        while passes < max_passes {
            passes += 1;
            let mut improved = false;
            for i in 0..self.n {
                let old = indices[i];
                base.copy_from(&a);
                base -= &self.outer[old];
                let need_rank = matches!(cur, Score::Undefined { .. });
                let mut best: Option<(usize, Score<S>)> = None;
                for c in 0..ncand {
                    if c == old {
                        continue;
                    }
                    trial.copy_from(&base);
                    trial += &self.outer[c];
                    let d = counts.d_after_swap(old, c);
                    let s = self.score(&trial, d, need_rank);
                    evaluations += 1;
                    let target = best.map_or(cur, |(_, b)| b);
                    if s.improves(target) {
                        best = Some((c, s));
                    }
                }
                if let Some((c, s)) = best {
                    a.copy_from(&base);
                    a += &self.outer[c];
                    counts.apply_swap(old, c);
                    indices[i] = c;
                    cur = s;
                    trace.push(s.value());
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }

        StartOutcome {
            score: cur,
            indices,
            passes,
            evaluations,
            trace,
        }
    }
}

fn search_outcomes<S: Scalar>(
    cfg: &SearchConfig<S>,
    evaluator: &Evaluator<S>,
) -> Result<Vec<StartOutcome<S>>> {
    let model = evaluator.model();
    let p = model.p();
    if cfg.candidates.is_empty() {
        return Err(Error::invalid("candidate set is empty"));
    }
    if cfg.starts == 0 {
        return Err(Error::invalid("at least one start is required"));
    }
    let ftable = evaluator.f_table(cfg.n)?;
    let outer: Vec<DMatrix<S>> = cfg
        .candidates
        .points()
        .iter()
        .map(|pt| {
            let f = model.expand(pt)?;
            Ok(&f * f.transpose())
        })
        .collect::<Result<_>>()?;
    let ctx = SearchContext {
        evaluator,
        ftable: &ftable,
        outer: &outer,
        n: cfg.n,
        p,
    };
    let outcomes: Vec<StartOutcome<S>> = (0..cfg.starts)
        .into_par_iter()
        .map(|start| {
            let out = ctx.run_start(cfg.seed, start, cfg.max_passes);
            if cfg.log_progress {
                eprintln!(
                    "start {}: passes={} value={:.9e}",
                    start,
                    out.passes,
                    out.score.value().as_f64()
                );
            }
            out
        })
        .collect();
    Ok(outcomes)
}

/// Point-exchange search over the candidate set.
///
/// Each start draws `n` candidate points uniformly with replacement, then
/// repeatedly sweeps the run positions, replacing each run by the candidate
/// that maximizes the criterion when the gain clears a 1e-12 relative
/// margin. A start stops when a full pass makes no exchange or the pass cap
/// is hit. The result is deterministic for a fixed configuration: starts
/// run on independent RNG streams and merge in start order.
pub fn exchange_search<S: Scalar>(cfg: &SearchConfig<S>) -> Result<SearchResult<S>> {
    let model = ModelSpec::full_quadratic(cfg.candidates.q());
    if cfg.n < model.p() {
        return Err(Error::Infeasible(format!(
            "n = {} runs cannot estimate p = {} parameters",
            cfg.n,
            model.p()
        )));
    }
    let evaluator = Evaluator::new(&model, cfg.candidates.region(), cfg.criterion.clone())?;
    let outcomes = search_outcomes(cfg, &evaluator)?;

    let mut best = 0;
    for i in 1..outcomes.len() {
        if outcomes[i].score.merge_beats(outcomes[best].score) {
            best = i;
        }
    }
    let evaluations = outcomes.iter().map(|o| o.evaluations).sum();
    let history: Vec<S> = outcomes.iter().map(|o| o.score.value()).collect();

    if let Score::Undefined { d, rank } = outcomes[best].score {
        return Err(Error::Infeasible(format!(
            "no start reached a defined criterion value (n = {}, p = {}, candidates = {}; \
             best undefined state: pure-error df {}, information rank {})",
            cfg.n,
            model.p(),
            cfg.candidates.len(),
            d,
            rank
        )));
    }

    let points = outcomes[best]
        .indices
        .iter()
        .map(|&i| cfg.candidates.points()[i].clone())
        .collect();
    let design = Design::new(points);
    let value = evaluator.evaluate(&design)?;
    Ok(SearchResult {
        best: design,
        value,
        history,
        evaluations,
    })
}

/// Report of [`verify_optimal`]: how a supplied design compares against the
/// best design an exchange search can find under the same configuration.
#[derive(Debug, Clone)]
pub struct VerifyReport<S: Scalar = f64> {
    pub candidate_value: CriterionValue<S>,
    pub search: SearchResult<S>,
    /// `true` when the supplied design scores at least the search best
    /// within 1e-9 relative. The search is a heuristic, so this reads "not
    /// improved upon", never "proven optimal".
    pub not_improved_upon: bool,
    /// `(best - candidate) / best`, clamped at zero.
    pub relative_gap: S,
}

/// Evaluate `candidate_design` under the search criterion and check whether
/// the exchange search improves on it.
pub fn verify_optimal<S: Scalar>(
    candidate_design: &Design<S>,
    cfg: &SearchConfig<S>,
) -> Result<VerifyReport<S>> {
    let model = ModelSpec::full_quadratic(cfg.candidates.q());
    let evaluator = Evaluator::new(&model, cfg.candidates.region(), cfg.criterion.clone())?;
    let candidate_value = evaluator.evaluate(candidate_design)?;
    let search = exchange_search(cfg)?;
    let best = search.value.value;
    let cand = candidate_value.value;
    let not_improved_upon = cand >= best * S::of_f64(1.0 - 1e-9);
    let relative_gap = if best > S::zero() {
        ((best - cand) / best).max(S::zero())
    } else {
        S::zero()
    };
    Ok(VerifyReport {
        candidate_value,
        search,
        not_improved_upon,
        relative_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::{kappa, CriterionKind};
    use crate::model::candidate_set;
    use crate::region::Region;
    use approx::assert_relative_eq;

    fn ds_config(n: usize, q: usize) -> SearchConfig {
        let region = Region::cube(q);
        let cands = candidate_set(&region);
        let model = ModelSpec::full_quadratic(q);
        let mut cfg =
            SearchConfig::new(n, cands, CriterionConfig::single(CriterionKind::Ds, &model));
        cfg.starts = 12;
        cfg.seed = 42;
        cfg
    }

    /// All size-`n` multisets over `0..ncand`.
    fn multisets(ncand: usize, n: usize) -> Vec<Vec<usize>> {
        fn rec(
            ncand: usize,
            n: usize,
            from: usize,
            cur: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if cur.len() == n {
                out.push(cur.clone());
                return;
            }
            for c in from..ncand {
                cur.push(c);
                rec(ncand, n, c, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(n);
        rec(ncand, n, 0, &mut cur, &mut out);
        out
    }

    #[test]
    fn exhaustive_oracle_q2_ds() {
        // q = 2 cube, n = 6: all C(14, 6) = 3003 candidate multisets.
        let cfg = ds_config(6, 2);
        let model = ModelSpec::full_quadratic(2);
        let ev = Evaluator::new(&model, cfg.candidates.region(), cfg.criterion.clone()).unwrap();
        let sets = multisets(cfg.candidates.len(), 6);
        assert_eq!(sets.len(), 3003);
        let mut best = 0.0f64;
        for set in &sets {
            let design = Design::new(
                set.iter()
                    .map(|&i| cfg.candidates.points()[i].clone())
                    .collect(),
            );
            let v = ev.evaluate(&design).unwrap().value;
            if v > best {
                best = v;
            }
        }
        let found = exchange_search(&cfg).unwrap();
        assert_relative_eq!(found.value.value, best, max_relative = 1e-9);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = ds_config(7, 2);
        let a = exchange_search(&cfg).unwrap();
        let b = exchange_search(&cfg).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.history, b.history);
        assert_eq!(a.evaluations, b.evaluations);
        assert_eq!(a.value.value, b.value.value);
    }

    #[test]
    fn returned_points_belong_to_candidate_set() {
        let cfg = ds_config(8, 2);
        let result = exchange_search(&cfg).unwrap();
        let keys: std::collections::HashSet<_> = cfg
            .candidates
            .points()
            .iter()
            .map(|p| p.replicate_key())
            .collect();
        for pt in result.best.points() {
            assert!(keys.contains(&pt.replicate_key()));
        }
    }

    #[test]
    fn incumbent_trace_is_monotone() {
        let cfg = ds_config(7, 2);
        let model = ModelSpec::full_quadratic(2);
        let ev = Evaluator::new(&model, cfg.candidates.region(), cfg.criterion.clone()).unwrap();
        let ftable = ev.f_table(cfg.n).unwrap();
        let outer: Vec<DMatrix<f64>> = cfg
            .candidates
            .points()
            .iter()
            .map(|pt| {
                let f = model.expand(pt).unwrap();
                &f * f.transpose()
            })
            .collect();
        let ctx = SearchContext {
            evaluator: &ev,
            ftable: &ftable,
            outer: &outer,
            n: cfg.n,
            p: model.p(),
        };
        for start in 0..6 {
            let out = ctx.run_start(cfg.seed, start, cfg.max_passes);
            for w in out.trace.windows(2) {
                assert!(w[1] >= w[0], "incumbent must never decrease");
            }
        }
    }

    #[test]
    fn zero_passes_returns_the_draw_unchanged() {
        let mut cfg = ds_config(6, 2);
        cfg.starts = 1;
        cfg.max_passes = 0;
        // reproduce the start's draw with the same stream
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        rng.set_stream(0);
        let expect: Vec<usize> = (0..cfg.n)
            .map(|_| rng.random_range(0..cfg.candidates.len()))
            .collect();
        match exchange_search(&cfg) {
            Ok(res) => {
                for (pt, &i) in res.best.points().iter().zip(&expect) {
                    assert_eq!(pt, &cfg.candidates.points()[i]);
                }
            }
            Err(Error::Infeasible(_)) => {
                // the raw draw may be singular; that is a legal outcome here
            }
            Err(e) => panic!("unexpected error: {e}"),
        }
    }

    #[test]
    fn infeasible_run_count_is_reported() {
        let cfg = ds_config(4, 2); // p = 6 > n
        match exchange_search(&cfg) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("p = 6")),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn undefined_starts_get_repaired() {
        // (DP)_S with a tight run budget: random draws often have d = 0 or a
        // singular X'X, so the repair path must still deliver designs.
        let region = Region::cube(2);
        let cands = candidate_set(&region);
        let model = ModelSpec::full_quadratic(2);
        let mut kappas = [0.0; 9];
        kappas[kappa::DPS] = 1.0;
        let crit =
            CriterionConfig::new(kappas, [0.05; 4], CriterionConfig::<f64>::default_w(&model));
        let mut cfg = SearchConfig::new(7, cands, crit);
        cfg.starts = 8;
        cfg.seed = 7;
        let res = exchange_search(&cfg).unwrap();
        assert!(res.value.defined);
        assert!(res.value.value > 0.0);
        // d >= 1 guaranteed for a defined (DP)_S value
        let (d, _) = crate::model::df_accounting(&res.best, &model);
        assert!(d >= 1);
    }

    #[test]
    fn verify_reports_perturbation_as_improvable() {
        // I_D on the q = 2 cube: compare the search optimum against itself
        // and against a perturbed copy.
        let region = Region::cube(2);
        let cands = candidate_set(&region);
        let model = ModelSpec::full_quadratic(2);
        let mut cfg =
            SearchConfig::new(8, cands, CriterionConfig::single(CriterionKind::Id, &model));
        cfg.starts = 16;
        cfg.seed = 3;
        let best = exchange_search(&cfg).unwrap().best;
        let report = verify_optimal(&best, &cfg).unwrap();
        assert!(report.not_improved_upon);
        assert_eq!(report.relative_gap, 0.0);

        let mut rows: Vec<Vec<f64>> = best.points().iter().map(|p| p.coords().to_vec()).collect();
        rows[0] = vec![0.0, 0.0];
        rows[1] = vec![0.0, 0.0];
        rows[2] = vec![0.0, 0.0];
        let perturbed = Design::from_rows(rows);
        let report = verify_optimal(&perturbed, &cfg).unwrap();
        assert!(!report.not_improved_upon);
        assert!(report.relative_gap > 0.0);
    }
}
