//! DAG structure learning over the lagged variables: trace-exponential
//! acyclicity, forward-only tabu mask, augmented-Lagrangian NOTEARS with a
//! proximal-gradient inner solver, and threshold pruning.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::temporal::{LaggedDataset, CURRENT_SUFFIX, NEXT_SUFFIX, PROGRESS_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NotearsConfig {
    pub lambda1: f64,
    pub h_tolerance: f64,
    pub max_outer_iterations: usize,
    pub penalty_init: f64,
    pub penalty_multiplier: f64,
    pub prune_threshold: f64,
    pub seed: u64,
}

impl Default for NotearsConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            h_tolerance: 1e-8,
            max_outer_iterations: 100,
            penalty_init: 1.0,
            penalty_multiplier: 10.0,
            prune_threshold: 0.5,
            seed: 42,
        }
    }
}

impl NotearsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 {
            return Err(Error::Config("lambda1 must be >= 0".into()));
        }
        if self.h_tolerance <= 0.0 {
            return Err(Error::Config("h_tolerance must be > 0".into()));
        }
        if self.penalty_multiplier <= 1.0 {
            return Err(Error::Config("penalty_multiplier must be > 1".into()));
        }
        Ok(())
    }
}

/// Role of a lagged variable, parsed from its name suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarRole {
    Current,
    Next,
    Progress,
}

fn parse_role(name: &str) -> Result<VarRole> {
    if PROGRESS_NAMES.contains(&name) {
        Ok(VarRole::Progress)
    } else if name.ends_with(NEXT_SUFFIX) {
        Ok(VarRole::Next)
    } else if name.ends_with(CURRENT_SUFFIX) {
        Ok(VarRole::Current)
    } else {
        Err(Error::MalformedVariableName(name.to_string()))
    }
}

/// Forbidden-edge matrix: back-step edges, edges into progress indicators,
/// progress-to-progress edges, and self-loops.
#[derive(Debug, Clone)]
pub struct TabuMask {
    forbidden: Vec<bool>,
    d: usize,
}

impl TabuMask {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_forbidden(&self, i: usize, j: usize) -> bool {
        self.forbidden[i * self.d + j]
    }

    pub fn forbidden_count(&self) -> usize {
        self.forbidden.iter().filter(|&&f| f).count()
    }

    /// Zeroes every forbidden coordinate in place.
    pub fn project(&self, w: &mut Array2<f64>) {
        for i in 0..self.d {
            for j in 0..self.d {
                if self.forbidden[i * self.d + j] {
                    w[[i, j]] = 0.0;
                }
            }
        }
    }
}

pub fn build_tabu_mask(variable_names: &[String]) -> Result<TabuMask> {
    let roles: Vec<VarRole> = variable_names
        .iter()
        .map(|n| parse_role(n))
        .collect::<Result<_>>()?;
    let d = roles.len();
    let mut forbidden = vec![false; d * d];
    for i in 0..d {
        for j in 0..d {
            let banned = i == j
                || (roles[i] == VarRole::Next && roles[j] == VarRole::Current)
                || roles[j] == VarRole::Progress;
            forbidden[i * d + j] = banned;
        }
    }
    Ok(TabuMask { forbidden, d })
}

/// Matrix exponential by scaling-and-squaring over a truncated Taylor series.
/// Adequate for the small dense matrices used here.
pub fn matrix_exp(a: &Array2<f64>) -> Array2<f64> {
    let d = a.nrows();
    let norm = a
        .axis_iter(Axis(0))
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let s = if norm > 1.0 {
        norm.log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2f64.powi(s as i32);
    let mut result = Array2::<f64>::eye(d);
    let mut term = Array2::<f64>::eye(d);
    for k in 1..=60 {
        term = term.dot(&scaled) / k as f64;
        result += &term;
        let term_norm = term.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        if term_norm < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        result = result.dot(&result);
    }
    result
}

/// h(W) = tr(exp(W∘W)) − d. Zero iff the support of W is acyclic.
pub fn acyclicity(w: &Array2<f64>) -> Result<f64> {
    if w.nrows() != w.ncols() {
        return Err(Error::NonSquare {
            rows: w.nrows(),
            cols: w.ncols(),
        });
    }
    let e = matrix_exp(&(w * w));
    Ok(e.diag().sum() - w.nrows() as f64)
}

/// Gradient of h at W: exp(W∘W)ᵀ ∘ 2W.
fn acyclicity_grad(w: &Array2<f64>) -> (f64, Array2<f64>) {
    let e = matrix_exp(&(w * w));
    let h = e.diag().sum() - w.nrows() as f64;
    (h, e.t().to_owned() * 2.0 * w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

/// Learned weight matrix with its pruned edge set.
#[derive(Debug, Clone)]
pub struct WeightedDag {
    pub variable_names: Vec<String>,
    pub weights: Array2<f64>,
    pub edges: Vec<Edge>,
    pub prune_threshold: f64,
}

impl WeightedDag {
    pub fn backward_edge_count(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| e.source.ends_with(NEXT_SUFFIX) && e.target.ends_with(CURRENT_SUFFIX))
            .count()
    }

    /// Pruned in-edge sources per node, in variable order.
    pub fn parents_of(&self, node: &str) -> Vec<String> {
        let mut parents: Vec<String> = self
            .edges
            .iter()
            .filter(|e| e.target == node)
            .map(|e| e.source.clone())
            .collect();
        parents.sort_by_key(|p| self.variable_names.iter().position(|n| n == p));
        parents
    }

    /// Topological-sort check over the pruned edge set.
    pub fn is_acyclic(&self) -> bool {
        let d = self.variable_names.len();
        let idx = |name: &str| self.variable_names.iter().position(|n| n == name).unwrap();
        let mut indegree = vec![0usize; d];
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); d];
        for e in &self.edges {
            let (s, t) = (idx(&e.source), idx(&e.target));
            adj[s].push(t);
            indegree[t] += 1;
        }
        let mut queue: Vec<usize> = (0..d).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &t in &adj[v] {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    queue.push(t);
                }
            }
        }
        seen == d
    }
}

/// Edges with |weight| above the threshold, strongest first; ties broken by
/// (source, target) name order.
pub fn prune(w: &Array2<f64>, variable_names: &[String], threshold: f64) -> Vec<Edge> {
    let mut edges = Vec::new();
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            if w[[i, j]].abs() > threshold {
                edges.push(Edge {
                    source: variable_names[i].clone(),
                    target: variable_names[j].clone(),
                    weight: w[[i, j]],
                });
            }
        }
    }
    edges.sort_by(|a, b| {
        b.weight
            .abs()
            .partial_cmp(&a.weight.abs())
            .unwrap()
            .then_with(|| (&a.source, &a.target).cmp(&(&b.source, &b.target)))
    });
    edges
}

/// Augmented-Lagrangian objective pieces for a fixed (rho, alpha).
struct Smooth<'a> {
    gram: &'a Array2<f64>, // XᵀX / n
    rho: f64,
    alpha: f64,
    mask: &'a TabuMask,
}

impl Smooth<'_> {
    /// Smooth part g(W) = ½ tr((I−W)ᵀ S (I−W)) + ρ/2 h² + α h and its gradient,
    /// with forbidden coordinates projected out of the gradient.
    fn eval(&self, w: &Array2<f64>) -> (f64, Array2<f64>) {
        let d = w.nrows();
        let i_minus_w = Array2::<f64>::eye(d) - w;
        let s_im = self.gram.dot(&i_minus_w);
        let loss = 0.5 * i_minus_w.t().dot(&s_im).diag().sum();
        let mut grad = -&s_im; // S·W − S
        let (h, gh) = acyclicity_grad(w);
        let val = loss + 0.5 * self.rho * h * h + self.alpha * h;
        grad += &(gh * (self.rho * h + self.alpha));
        self.mask.project(&mut grad);
        (val, grad)
    }
}

fn soft_threshold(w: &Array2<f64>, t: f64) -> Array2<f64> {
    w.mapv(|v| {
        if v > t {
            v - t
        } else if v < -t {
            v + t
        } else {
            0.0
        }
    })
}

/// FISTA with backtracking on g + λ1‖·‖₁ over the masked support.
fn inner_solve(smooth: &Smooth, lambda1: f64, w0: &Array2<f64>) -> Array2<f64> {
    let mut w = w0.clone();
    let mut y = w.clone();
    let mut momentum = 1.0f64;
    let mut step = 1.0f64;
    for _ in 0..5000 {
        let (gy, grad_y) = smooth.eval(&y);
        // backtracking line search on the proximal step
        let next;
        loop {
            let mut cand = soft_threshold(&(&y - &(&grad_y * step)), step * lambda1);
            smooth.mask.project(&mut cand);
            let diff = &cand - &y;
            let quad = gy
                + (&grad_y * &diff).sum()
                + diff.iter().map(|v| v * v).sum::<f64>() / (2.0 * step);
            let (g_cand, _) = smooth.eval(&cand);
            if g_cand <= quad + 1e-12 || step < 1e-12 {
                next = cand;
                break;
            }
            step *= 0.5;
        }
        let delta = (&next - &w).iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        let momentum_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = &next + &((&next - &w) * ((momentum - 1.0) / momentum_next));
        smooth.mask.project(&mut y);
        w = next;
        momentum = momentum_next;
        if delta < 1e-7 {
            break;
        }
        step *= 2.0; // allow the step to grow back after backtracking
    }
    w
}

/// NOTEARS: minimizes (1/2n)‖X − XW‖²_F + λ1‖W‖₁ subject to h(W)=0 via an
/// augmented-Lagrangian outer loop. Forbidden coordinates are held at exactly
/// zero throughout, so mask preservation is exact rather than approximate.
pub fn learn_structure(
    data: &LaggedDataset,
    mask: &TabuMask,
    config: &NotearsConfig,
) -> Result<WeightedDag> {
    config.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::Estimation("no rows for structure learning".into()));
    }
    let d = data.n_vars();
    if mask.dim() != d {
        return Err(Error::Schema(format!(
            "mask dimension {} does not match variable count {d}",
            mask.dim()
        )));
    }
    let n = data.n_rows();
    let mut x = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for (j, &v) in data.row(i).iter().enumerate() {
            x[[i, j]] = v as f64;
        }
    }
    // z-score each column so weights live on a correlation scale and the L1
    // penalty treats rare and common intents evenly; constant columns zero out
    for mut col in x.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std > 0.0 {
            col.mapv_inplace(|v| (v - mean) / std);
        } else {
            col.fill(0.0);
        }
    }
    let gram = x.t().dot(&x) / n as f64;

    let mut w = Array2::<f64>::zeros((d, d));
    let mut rho = config.penalty_init;
    let mut alpha = 0.0;
    let mut h = f64::INFINITY;
    for _ in 0..config.max_outer_iterations {
        let smooth = Smooth {
            gram: &gram,
            rho,
            alpha,
            mask,
        };
        w = inner_solve(&smooth, config.lambda1, &w);
        let h_new = acyclicity(&w)?;
        if h_new <= config.h_tolerance {
            h = h_new;
            break;
        }
        if h_new > 0.25 * h && rho < 1e16 {
            rho *= config.penalty_multiplier;
        }
        alpha += rho * h_new;
        h = h_new;
    }
    if h > config.h_tolerance {
        return Err(Error::Convergence {
            h,
            iterations: config.max_outer_iterations,
        });
    }
    let edges = prune(&w, data.variable_names(), config.prune_threshold);
    Ok(WeightedDag {
        variable_names: data.variable_names().to_vec(),
        weights: w,
        edges,
        prune_threshold: config.prune_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn names_for_k(k: usize) -> Vec<String> {
        let vocab: Vec<String> = (0..k).map(|i| format!("i{i:02}")).collect();
        let mut names: Vec<String> = vocab.iter().map(|n| format!("{n}__t")).collect();
        names.extend(vocab.iter().map(|n| format!("{n}__t1")));
        names.extend(PROGRESS_NAMES.iter().map(|s| s.to_string()));
        names
    }

    #[test]
    fn acyclicity_zero_matrix() {
        let w = Array2::<f64>::zeros((3, 3));
        assert_abs_diff_eq!(acyclicity(&w).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn acyclicity_upper_triangular_is_zero() {
        let mut w = Array2::<f64>::zeros((4, 4));
        w[[0, 1]] = 2.5;
        w[[0, 3]] = -1.2;
        w[[1, 2]] = 0.7;
        w[[2, 3]] = 3.0;
        assert_abs_diff_eq!(acyclicity(&w).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn acyclicity_two_cycle_matches_series_value() {
        let mut w = Array2::<f64>::zeros((2, 2));
        w[[0, 1]] = 1.0;
        w[[1, 0]] = 1.0;
        // tr(exp([[0,1],[1,0]])) = 2 cosh(1)
        let expected = 2.0 * 1f64.cosh() - 2.0;
        assert_abs_diff_eq!(acyclicity(&w).unwrap(), expected, epsilon = 1e-9);
        assert_abs_diff_eq!(acyclicity(&w).unwrap(), 1.0861612696304874, epsilon = 1e-6);
    }

    #[test]
    fn acyclicity_rejects_non_square() {
        let w = Array2::<f64>::zeros((2, 3));
        assert!(matches!(acyclicity(&w), Err(Error::NonSquare { .. })));
    }

    #[test]
    fn mask_forbids_expected_pairs() {
        let names = names_for_k(2);
        let mask = build_tabu_mask(&names).unwrap();
        let idx = |n: &str| names.iter().position(|x| x == n).unwrap();
        // 2x2 back-step block
        for s in ["i00__t1", "i01__t1"] {
            for t in ["i00__t", "i01__t"] {
                assert!(mask.is_forbidden(idx(s), idx(t)));
            }
        }
        // diagonal
        for i in 0..names.len() {
            assert!(mask.is_forbidden(i, i));
        }
        // forward edges allowed
        assert!(!mask.is_forbidden(idx("i00__t"), idx("i00__t1")));
        // progress may be a parent but never a child
        assert!(!mask.is_forbidden(idx("progress_early"), idx("i00__t1")));
        assert!(mask.is_forbidden(idx("i00__t"), idx("progress_mid")));
        assert!(mask.is_forbidden(idx("progress_early"), idx("progress_late")));
    }

    #[test]
    fn mask_count_matches_enumeration_for_k8() {
        let names = names_for_k(8);
        let mask = build_tabu_mask(&names).unwrap();
        // independent enumeration over the name convention
        let is_next = |n: &str| n.ends_with("__t1");
        let is_cur = |n: &str| !is_next(n) && n.ends_with("__t");
        let is_prog = |n: &str| n.starts_with("progress_");
        let mut expected = 0;
        for (i, a) in names.iter().enumerate() {
            for (j, b) in names.iter().enumerate() {
                if i == j || (is_next(a) && is_cur(b)) || is_prog(b) {
                    expected += 1;
                    assert!(mask.is_forbidden(i, j), "{a} -> {b} should be forbidden");
                } else {
                    assert!(!mask.is_forbidden(i, j), "{a} -> {b} should be allowed");
                }
            }
        }
        assert_eq!(mask.forbidden_count(), expected);
        // 64 back-step + 3*18 into progress + 19 diagonal
        assert_eq!(expected, 64 + 54 + 19);
    }

    #[test]
    fn mask_rejects_malformed_names() {
        let names = vec!["a__t".to_string(), "weird".to_string()];
        assert!(matches!(
            build_tabu_mask(&names),
            Err(Error::MalformedVariableName(_))
        ));
    }

    #[test]
    fn prune_orders_by_weight_then_name() {
        let names: Vec<String> = ["a__t", "b__t", "a__t1"].iter().map(|s| s.to_string()).collect();
        let mut w = Array2::<f64>::zeros((3, 3));
        w[[0, 2]] = 0.59;
        w[[1, 2]] = -0.59;
        w[[0, 1]] = 0.3;
        let edges = prune(&w, &names, 0.5);
        assert_eq!(edges.len(), 2);
        assert_eq!(edges[0].source, "a__t");
        assert_eq!(edges[1].source, "b__t");
        assert!(prune(&w, &names, 1.0).is_empty());
        assert_eq!(prune(&w, &names, 0.0).len(), 3);
    }

    #[test]
    fn prune_is_monotone_in_threshold() {
        let names: Vec<String> = ["a__t", "b__t", "a__t1"].iter().map(|s| s.to_string()).collect();
        let mut w = Array2::<f64>::zeros((3, 3));
        w[[0, 1]] = 0.2;
        w[[0, 2]] = 0.6;
        w[[1, 2]] = 0.9;
        let mut prev = prune(&w, &names, 0.0).len();
        for thr in [0.1, 0.3, 0.5, 0.7, 1.0] {
            let cur = prune(&w, &names, thr).len();
            assert!(cur <= prev);
            prev = cur;
        }
    }

    #[test]
    fn constant_data_learns_no_edges() {
        use crate::corpus::RowTag;
        let names = names_for_k(1);
        // all-zero intent activity, progress early on every row
        let mut rows = Vec::new();
        for _ in 0..20 {
            rows.extend([0, 0, 1, 0, 0]);
        }
        let tags = (0..20)
            .map(|i| RowTag {
                dialogue_id: format!("d{i}"),
                turn_index: 0,
            })
            .collect();
        let data = LaggedDataset::from_parts(names.clone(), rows, tags).unwrap();
        let mask = build_tabu_mask(&names).unwrap();
        let dag = learn_structure(&data, &mask, &NotearsConfig::default()).unwrap();
        assert!(dag.edges.is_empty());
        assert_eq!(dag.backward_edge_count(), 0);
        assert!(dag.is_acyclic());
    }
}
