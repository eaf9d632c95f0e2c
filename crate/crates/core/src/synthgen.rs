//! Complexity-targeted synthetic dataset generation.
//!
//! Datasets are produced by a small flocking simulation: labelled points
//! move under class-level forces (pull towards a per-class home point,
//! short-range repulsion between same-class neighbours, velocity
//! alignment, attraction towards the nearest rival class) plus Gaussian
//! jitter. A genetic algorithm searches the four force weights for the
//! dataset whose [`measure_f1`]/[`measure_n1`] complexity lands closest
//! to a requested target, and [`generate_grid`] sweeps the 0.2-step
//! target grid used for knowledge-base construction.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{sq_dist, FeatureSpace, LabelledDataset};
use crate::error::{Error, Result};
use crate::metafeatures::fisher_ratio;
use crate::seed::Seed;

/// A requested complexity cell plus the shape of the dataset to emit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComplexityTarget {
    /// Feature-overlap difficulty in [0, 1]; higher = harder.
    pub f1: f64,
    /// Class-boundary difficulty in [0, 1]; higher = harder.
    pub n1: f64,
    pub instances: usize,
    pub features: usize,
    pub classes: usize,
}

impl ComplexityTarget {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.f1) || !(0.0..=1.0).contains(&self.n1) {
            return Err(Error::invalid(format!(
                "complexity targets must lie in [0,1], got f1={} n1={}",
                self.f1, self.n1
            )));
        }
        if self.n1 > self.f1 + 1e-12 {
            return Err(Error::invalid(format!(
                "n1={} must not exceed f1={}",
                self.n1, self.f1
            )));
        }
        if self.classes < 2 {
            return Err(Error::invalid("at least two classes required"));
        }
        if self.features == 0 {
            return Err(Error::invalid("at least one feature required"));
        }
        if self.instances < self.classes * 2 {
            return Err(Error::invalid(format!(
                "{} instances cannot cover {} classes twice",
                self.instances, self.classes
            )));
        }
        Ok(())
    }
}

/// Nonnegative force weights of the flocking rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoidRuleWeights {
    /// Pull towards the class home point.
    pub cohesion: f64,
    /// Short-range repulsion from the nearest same-class neighbour.
    pub separation: f64,
    /// Pull of a point's velocity towards its class mean velocity.
    pub alignment: f64,
    /// Pull towards the midpoint between the class's own centroid and
    /// its nearest rival's, graded by each point's fixed susceptibility
    /// rank. Moderate weights send only the most susceptible points to
    /// the contact line, where migrants of both classes interleave.
    pub class_attraction: f64,
}

impl BoidRuleWeights {
    pub fn new(cohesion: f64, separation: f64, alignment: f64, class_attraction: f64) -> Result<Self> {
        let w = BoidRuleWeights {
            cohesion,
            separation,
            alignment,
            class_attraction,
        };
        for v in w.as_array() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("rule weights must be nonnegative, got {v}")));
            }
        }
        if w.as_array().iter().all(|&v| v == 0.0) {
            return Err(Error::invalid("at least one rule weight must be positive"));
        }
        Ok(w)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.cohesion, self.separation, self.alignment, self.class_attraction]
    }
}

/// Search-budget knobs of the weight optimisation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GaSettings {
    pub population: usize,
    pub generations: usize,
    /// Individuals entering each selection tournament.
    pub tournament: usize,
    /// Best individuals copied unchanged into the next generation.
    pub elitism: usize,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Standard deviation of the Gaussian mutation step.
    pub mutation_sigma: f64,
    /// Stop early once the best residual falls below this.
    pub stop_at: f64,
}

impl Default for GaSettings {
    fn default() -> Self {
        GaSettings {
            population: 20,
            generations: 30,
            tournament: 3,
            elitism: 2,
            mutation_rate: 0.4,
            mutation_sigma: 0.2,
            stop_at: 0.02,
        }
    }
}

/// Sidecar metadata describing how a synthetic dataset came to be.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub target_f1: f64,
    pub target_n1: f64,
    pub achieved_f1: f64,
    pub achieved_n1: f64,
    pub seed: u64,
    /// Set when the best residual stayed above the feasibility cutoff.
    pub infeasible: bool,
}

/// Residual above which a target is declared out of the generator's reach.
pub const INFEASIBLE_RESIDUAL: f64 = 0.2;

/// A generated dataset together with its provenance.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: LabelledDataset,
    pub record: GenerationRecord,
    pub weights: BoidRuleWeights,
    /// Best residual after each generation; non-increasing.
    pub fitness_history: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Complexity measures.

/// Feature-overlap complexity: 1/(1 + r_max) where r_max is the largest
/// per-feature Fisher discriminant ratio. 0 when some feature separates
/// the classes cleanly, 1 when none discriminates at all.
pub fn measure_f1(ds: &LabelledDataset) -> Result<f64> {
    let mut max_ratio: f64 = 0.0;
    for j in 0..ds.n_features() {
        max_ratio = max_ratio.max(fisher_ratio(ds, j)?);
    }
    Ok(1.0 / (1.0 + max_ratio))
}

/// Boundary complexity: the fraction of instances touching at least one
/// minimum-spanning-tree edge that joins two classes. Distances are
/// Euclidean in the scaled feature space, making the measure invariant
/// to per-feature units.
pub fn measure_n1(ds: &LabelledDataset) -> Result<f64> {
    let m = ds.n_instances();
    if m < 3 {
        return Err(Error::invalid(format!("{m} instances are too few for a boundary measure")));
    }
    let all: Vec<usize> = (0..m).collect();
    let space = FeatureSpace::fit(ds, &all)?;
    let scaled = space.matrix(ds, &all);
    let parents = mst_parents(&scaled);
    let mut incident = vec![false; m];
    for (i, &p) in parents.iter().enumerate() {
        if i == 0 {
            continue;
        }
        if ds.label(i) != ds.label(p) {
            incident[i] = true;
            incident[p] = true;
        }
    }
    Ok(incident.iter().filter(|&&b| b).count() as f64 / m as f64)
}

/// Prim's algorithm from vertex 0; `parents[i]` is the MST neighbour
/// through which `i` was attached (parents[0] = 0). Distance ties break
/// towards the lower vertex index.
fn mst_parents(points: &[Vec<f64>]) -> Vec<usize> {
    let m = points.len();
    let mut in_tree = vec![false; m];
    let mut best_dist = vec![f64::INFINITY; m];
    let mut parent = vec![0usize; m];
    best_dist[0] = 0.0;
    for _ in 0..m {
        let mut next = usize::MAX;
        let mut next_dist = f64::INFINITY;
        for v in 0..m {
            if !in_tree[v] && best_dist[v] < next_dist {
                next_dist = best_dist[v];
                next = v;
            }
        }
        in_tree[next] = true;
        for v in 0..m {
            if !in_tree[v] {
                let d = sq_dist(&points[next], &points[v]);
                if d < best_dist[v] {
                    best_dist[v] = d;
                    parent[v] = next;
                }
            }
        }
    }
    parent
}

// ---------------------------------------------------------------------------
// The flocking simulation.

const SIM_STEPS: usize = 40;
const FORCE_SCALE: f64 = 0.2;
const DAMPING: f64 = 0.5;
const JITTER: f64 = 0.015;
/// Strength scale of the short-range repulsion kernel.
const REPULSION_RADIUS: f64 = 0.01;
/// Same-class nearest neighbours are recomputed every this many steps.
const NEIGHBOUR_REFRESH: usize = 4;

/// Run the flocking simulation and package the result as a dataset.
/// Deterministic in (`weights`, `target` shape, `seed`).
fn simulate(target: &ComplexityTarget, weights: &BoidRuleWeights, seed: Seed) -> Result<LabelledDataset> {
    let m = target.instances;
    let n = target.features;
    let c = target.classes;
    let mut rng = seed.rng();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    // Balanced labels; distinct home points spread along the diagonal.
    let labels: Vec<usize> = (0..m).map(|i| i % c).collect();
    let homes: Vec<Vec<f64>> = (0..c)
        .map(|k| vec![(k + 1) as f64 / (c + 1) as f64; n])
        .collect();

    let mut pos: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let mut vel: Vec<Vec<f64>> = vec![vec![0.0; n]; m];
    let class_members: Vec<Vec<usize>> = (0..c)
        .map(|k| (0..m).filter(|&i| labels[i] == k).collect())
        .collect();
    // Rival attraction is graded: each point's susceptibility grows with
    // its rank within its class (quadratically, so the ramp stays
    // bottom-heavy). A moderate weight therefore sends only the most
    // susceptible points to the contact line between the classes, where
    // migrants from both sides meet and interleave; the home pull fades
    // for committed migrants so they settle on the line instead of
    // stopping short of it. The boundary fraction can then grow without
    // dragging whole classes together, which would collapse the feature
    // overlap at the same time.
    let mut susceptibility = vec![0.0; m];
    for members in &class_members {
        let size = members.len() as f64;
        for (rank, &i) in members.iter().enumerate() {
            let u = (rank + 1) as f64 / size;
            susceptibility[i] = u * u;
        }
    }
    let mut nearest_same: Vec<usize> = vec![0; m];

    for step in 0..SIM_STEPS {
        if step % NEIGHBOUR_REFRESH == 0 {
            for members in &class_members {
                for &i in members {
                    let mut best = i;
                    let mut best_d = f64::INFINITY;
                    for &j in members {
                        if j == i {
                            continue;
                        }
                        let d = sq_dist(&pos[i], &pos[j]);
                        if d < best_d {
                            best_d = d;
                            best = j;
                        }
                    }
                    nearest_same[i] = best;
                }
            }
        }

        // Class centroids and mean velocities for this step.
        let mut centroids = vec![vec![0.0; n]; c];
        let mut mean_vel = vec![vec![0.0; n]; c];
        for k in 0..c {
            let size = class_members[k].len() as f64;
            for &i in &class_members[k] {
                for d in 0..n {
                    centroids[k][d] += pos[i][d] / size;
                    mean_vel[k][d] += vel[i][d] / size;
                }
            }
        }
        // Nearest rival centroid per class (ties → lower class code).
        let rival: Vec<usize> = (0..c)
            .map(|k| {
                let mut best = usize::MAX;
                let mut best_d = f64::INFINITY;
                for r in 0..c {
                    if r != k {
                        let d = sq_dist(&centroids[k], &centroids[r]);
                        if d < best_d {
                            best_d = d;
                            best = r;
                        }
                    }
                }
                best
            })
            .collect();

        for i in 0..m {
            let k = labels[i];
            let near = nearest_same[i];
            let engagement = weights.class_attraction * susceptibility[i];
            let homing = weights.cohesion * (1.0 - engagement).max(0.0);
            for d in 0..n {
                let home_pull = homes[k][d] - pos[i][d];
                let gap = pos[i][d] - pos[near][d];
                let repel = gap * REPULSION_RADIUS
                    / (sq_dist(&pos[i], &pos[near]) + REPULSION_RADIUS * REPULSION_RADIUS);
                let align = mean_vel[k][d] - vel[i][d];
                let contact = 0.5 * (centroids[k][d] + centroids[rival[k]][d]);
                let attract = contact - pos[i][d];
                let force = homing * home_pull
                    + weights.separation * repel
                    + weights.alignment * align
                    + engagement * attract;
                vel[i][d] = DAMPING * (vel[i][d] + FORCE_SCALE * force)
                    + JITTER * normal.sample(&mut rng);
            }
            for d in 0..n {
                pos[i][d] += vel[i][d];
            }
        }
    }

    let names: Vec<String> = (0..n).map(|d| format!("x{d}")).collect();
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let class_names: Vec<String> = (0..c).map(|k| format!("c{k}")).collect();
    let label_refs: Vec<&str> = labels.iter().map(|&l| class_names[l].as_str()).collect();
    let id = format!("syn-f{:02}-n{:02}", (target.f1 * 10.0).round() as i32, (target.n1 * 10.0).round() as i32);
    LabelledDataset::from_numeric_rows(&id, &name_refs, &pos, &label_refs)
}

// ---------------------------------------------------------------------------
// The weight search.

const GENE_MAX: f64 = 2.5;

fn repair(genes: &mut [f64; 4]) {
    for g in genes.iter_mut() {
        *g = g.clamp(0.0, GENE_MAX);
    }
    if genes.iter().all(|&g| g <= 1e-6) {
        genes[0] = 0.1;
    }
}

fn to_weights(genes: &[f64; 4]) -> BoidRuleWeights {
    BoidRuleWeights {
        cohesion: genes[0],
        separation: genes[1],
        alignment: genes[2],
        class_attraction: genes[3],
    }
}

/// Search the rule weights for a dataset matching the target complexity.
///
/// Tournament selection, uniform crossover and Gaussian mutation over
/// the four weights; the residual |f1 − target| + |n1 − target| is the
/// minimised fitness. The simulation seed is shared by every candidate,
/// so fitness is a pure function of the weights and the returned dataset
/// reproduces the best candidate exactly.
pub fn generate(target: &ComplexityTarget, ga: &GaSettings, seed: Seed) -> Result<SyntheticDataset> {
    target.validate()?;
    if ga.population < 2 || ga.generations == 0 || ga.tournament == 0 || ga.elitism >= ga.population {
        return Err(Error::invalid("degenerate search settings"));
    }
    let sim_seed = seed.derive("sim", 0);
    let mut rng = seed.derive("search", 0).rng();
    let normal = Normal::new(0.0, ga.mutation_sigma).map_err(|_| Error::invalid("bad mutation sigma"))?;

    let score = |genes: &[f64; 4]| -> Result<f64> {
        let ds = simulate(target, &to_weights(genes), sim_seed)?;
        let f1 = measure_f1(&ds)?;
        let n1 = measure_n1(&ds)?;
        Ok((f1 - target.f1).abs() + (n1 - target.n1).abs())
    };

    let mut pop: Vec<[f64; 4]> = (0..ga.population)
        .map(|_| {
            let mut genes = [0.0; 4];
            for g in genes.iter_mut() {
                *g = rng.gen::<f64>();
            }
            repair(&mut genes);
            genes
        })
        .collect();
    let mut fitness: Vec<f64> = crate::par::try_map_range(pop.len(), |i| score(&pop[i]))?;
    let mut history = Vec::with_capacity(ga.generations);

    for _ in 0..ga.generations {
        // Rank: best first, ties towards the earlier individual.
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fitness[a].partial_cmp(&fitness[b]).unwrap().then(a.cmp(&b)));
        history.push(fitness[order[0]]);
        if fitness[order[0]] <= ga.stop_at {
            break;
        }

        let mut next: Vec<[f64; 4]> = order[..ga.elitism].iter().map(|&i| pop[i]).collect();
        let mut carried: Vec<f64> = order[..ga.elitism].iter().map(|&i| fitness[i]).collect();
        while next.len() < ga.population {
            let tournament = |rng: &mut rand_chacha::ChaCha8Rng| -> usize {
                let mut best = rng.gen_range(0..pop.len());
                for _ in 1..ga.tournament {
                    let challenger = rng.gen_range(0..pop.len());
                    if fitness[challenger] < fitness[best]
                        || (fitness[challenger] == fitness[best] && challenger < best)
                    {
                        best = challenger;
                    }
                }
                best
            };
            let pa = pop[tournament(&mut rng)];
            let pb = pop[tournament(&mut rng)];
            let mut child = [0.0; 4];
            for (g, gene) in child.iter_mut().enumerate() {
                *gene = if rng.gen::<bool>() { pa[g] } else { pb[g] };
                if rng.gen::<f64>() < ga.mutation_rate {
                    *gene += normal.sample(&mut rng);
                }
            }
            repair(&mut child);
            next.push(child);
        }
        let fresh: Vec<f64> =
            crate::par::try_map_range(next.len() - ga.elitism, |i| score(&next[ga.elitism + i]))?;
        carried.extend(fresh);
        pop = next;
        fitness = carried;
    }

    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| fitness[a].partial_cmp(&fitness[b]).unwrap().then(a.cmp(&b)));
    history.push(fitness[order[0]]);
    let best = pop[order[0]];
    let dataset = simulate(target, &to_weights(&best), sim_seed)?;
    let achieved_f1 = measure_f1(&dataset)?;
    let achieved_n1 = measure_n1(&dataset)?;
    let residual = (achieved_f1 - target.f1).abs() + (achieved_n1 - target.n1).abs();
    Ok(SyntheticDataset {
        dataset,
        record: GenerationRecord {
            target_f1: target.f1,
            target_n1: target.n1,
            achieved_f1,
            achieved_n1,
            seed: seed.value(),
            infeasible: residual > INFEASIBLE_RESIDUAL,
        },
        weights: to_weights(&best),
        fitness_history: history,
    })
}

/// The five 0.2-step complexity levels.
pub const GRID_LEVELS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

/// One synthetic dataset per (f1, n1) grid cell with n1 ≤ f1 — fifteen in
/// total — mimicking the template's instance count, dimensionality and
/// class count.
pub fn generate_grid(
    template: &LabelledDataset,
    ga: &GaSettings,
    seed: Seed,
) -> Result<Vec<SyntheticDataset>> {
    generate_grid_shaped(
        template.n_instances(),
        template.n_features(),
        template.n_classes(),
        ga,
        seed,
    )
}

/// [`generate_grid`] for an explicitly given dataset shape.
pub fn generate_grid_shaped(
    instances: usize,
    features: usize,
    classes: usize,
    ga: &GaSettings,
    seed: Seed,
) -> Result<Vec<SyntheticDataset>> {
    let mut out = Vec::new();
    let mut cell = 0u64;
    for &f1 in &GRID_LEVELS {
        for &n1 in &GRID_LEVELS {
            if n1 > f1 + 1e-12 {
                continue;
            }
            let target = ComplexityTarget {
                f1,
                n1,
                instances,
                features,
                classes,
            };
            out.push(generate(&target, ga, seed.derive("grid", cell))?);
            cell += 1;
        }
    }
    Ok(out)
}
