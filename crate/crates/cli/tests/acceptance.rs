//! Acceptance suite: one test per release criterion, each line of the
//! harness output doubling as the pass/fail verdict for its criterion.
//!
//! The suite leans on independent oracles — brute-force recomputations,
//! algebraic identities and hand-worked examples — rather than repeating
//! the production formulas, so a formula typo cannot cancel itself out.
//! The statistical criteria run on seeded synthetic benchmarks sized for
//! a workstation; every seed below is frozen, making each verdict
//! reproducible bit for bit.

mod common;

use std::collections::HashMap;
use std::fs;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;

use miscast::data::LabelledDataset;
use miscast::diversity::{diversity, diversity_of_labels, lrid, ClassCounts};
use miscast::estimator::{
    defuzzify, estimate_uncertainty, fcm_fit, memberships, misclassification_rate,
    nested_cv_run, EstimatorConfig, FuzzyClusterModel, Membership, NestedCvOutcome,
    ESTIMATOR_FORMAT_VERSION,
};
use miscast::evalstats::{
    abstention_curve, auprc, auroc, class_likelihood, ism_flags, spearman, univariate_or,
};
use miscast::explain::shapley;
use miscast::knowledgebase::{
    build_kb, KbBuildConfig, KbRecord, KbSource, KnowledgeBase, Provenance,
};
use miscast::learners::tree::{grow_tree, DecisionTree, TreeParams};
use miscast::learners::{ClassifierKind, ClassifierSpec};
use miscast::metafeatures::{
    class_level_outlierness, disjunct_class_diversity, disjunct_size, kdn, outlierness,
    MetaContext, MetaConfig, MetaFeatureVector,
};
use miscast::seed::Seed;
use miscast::synthgen::{generate, ComplexityTarget, GaSettings};

// ---------------------------------------------------------------------------
// Shared benchmark fixtures.

/// Two-class Gaussian benchmark with moderate overlap (about a fifth of
/// the instances sit on the wrong side of the optimal boundary).
fn gaussian_overlap(n: usize, seed: Seed) -> LabelledDataset {
    let mut rng = seed.rng();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let d = 1.06;
    for i in 0..n {
        let c = i % 2;
        let shift = if c == 1 { d } else { 0.0 };
        let x: f64 = rng.sample::<f64, _>(StandardNormal) + shift;
        let y: f64 = rng.sample::<f64, _>(StandardNormal) + shift;
        rows.push(vec![x, y]);
        labels.push(if c == 1 { "pos" } else { "neg" });
    }
    LabelledDataset::from_numeric_rows("bench", &["x", "y"], &rows, &labels).unwrap()
}

/// Estimator budget used for every nested benchmark run.
fn bench_config() -> EstimatorConfig {
    EstimatorConfig {
        n_clusters: (2, 10),
        bo_budget: 16,
        restarts: 3,
        model_budget: 8,
        ..EstimatorConfig::default()
    }
}

fn benchmark() -> &'static LabelledDataset {
    static DS: OnceLock<LabelledDataset> = OnceLock::new();
    DS.get_or_init(|| gaussian_overlap(2000, Seed(7)))
}

/// Auxiliary knowledge base from an independent draw of the same family.
fn aux_kb() -> &'static KnowledgeBase {
    static KB: OnceLock<KnowledgeBase> = OnceLock::new();
    KB.get_or_init(|| {
        let aux = gaussian_overlap(400, Seed(99));
        let spec = ClassifierSpec::new(ClassifierKind::KnnClassifier);
        build_kb(&[KbSource::real(aux)], &spec, &KbBuildConfig::default(), Seed(99))
            .unwrap()
            .0
    })
}

/// One nested evaluation per classifier family on the shared benchmark;
/// computed once and reused by the utility, filter and abstention tests.
fn bench_outcomes() -> &'static Vec<(ClassifierKind, NestedCvOutcome)> {
    static OUT: OnceLock<Vec<(ClassifierKind, NestedCvOutcome)>> = OnceLock::new();
    OUT.get_or_init(|| {
        ClassifierKind::ALL
            .iter()
            .map(|&kind| {
                let outcome = nested_cv_run(
                    benchmark(),
                    aux_kb(),
                    &ClassifierSpec::new(kind),
                    &bench_config(),
                    Seed(7),
                )
                .unwrap();
                (kind, outcome)
            })
            .collect()
    })
}

/// Random numeric dataset with balanced labels; features uniform in
/// [0, 10) so distance and threshold ties have probability zero.
fn random_dataset(rng: &mut impl Rng, m: usize, n_feat: usize, c: usize) -> LabelledDataset {
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n_feat).map(|_| rng.gen::<f64>() * 10.0).collect())
        .collect();
    let class_names = ["a", "b", "c", "d"];
    let labels: Vec<&str> = (0..m).map(|i| class_names[i % c]).collect();
    let names: Vec<String> = (0..n_feat).map(|j| format!("f{j}")).collect();
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    LabelledDataset::from_numeric_rows("rand", &name_refs, &rows, &labels).unwrap()
}

// ---------------------------------------------------------------------------
// Criterion 1 — closed-form statistics against independent oracles.

#[test]
fn criterion_01_formula_oracles() {
    let mut rng = Seed(101).rng();

    // Diversity and its likelihood-ratio statistic against the entropy
    // identity: lrid = 2·M·(ln C − H), diversity = clamp(H / ln C).
    for trial in 0..120 {
        let c = 2 + trial % 4;
        let counts: Vec<f64> = loop {
            let v: Vec<f64> = (0..c)
                .map(|_| {
                    if rng.gen_bool(0.2) {
                        0.0
                    } else if rng.gen_bool(0.3) {
                        rng.gen::<f64>() * 7.0
                    } else {
                        rng.gen_range(1..=40) as f64
                    }
                })
                .collect();
            if v.iter().sum::<f64>() > 0.0 {
                break v;
            }
        };
        let total: f64 = counts.iter().sum();
        let entropy: f64 = counts
            .iter()
            .filter(|&&n| n > 0.0)
            .map(|&n| {
                let p = n / total;
                -p * p.ln()
            })
            .sum();
        let lrid_oracle = 2.0 * total * ((c as f64).ln() - entropy);
        let div_oracle = (entropy / (c as f64).ln()).clamp(0.0, 1.0);
        let cc = ClassCounts::new(counts).unwrap();
        assert!((lrid(&cc) - lrid_oracle).abs() < 1e-9, "lrid mismatch on trial {trial}");
        assert!((diversity(&cc) - div_oracle).abs() < 1e-9, "diversity mismatch on trial {trial}");
    }

    // Misclassification rate against the complementary count.
    for _ in 0..120 {
        let (tp, fp, tn, fn_) = (
            rng.gen_range(0..=50usize),
            rng.gen_range(0..=50usize),
            rng.gen_range(0..=50usize),
            rng.gen_range(0..=50usize),
        );
        let total = tp + fp + tn + fn_;
        if total == 0 {
            assert!(misclassification_rate(tp, fp, tn, fn_).is_err());
            continue;
        }
        let oracle = (fp + fn_) as f64 / total as f64;
        let got = misclassification_rate(tp, fp, tn, fn_).unwrap();
        assert!((got - oracle).abs() < 1e-12);
    }
    assert_eq!(misclassification_rate(9, 0, 4, 0).unwrap(), 0.0);
    assert_eq!(misclassification_rate(0, 3, 0, 8).unwrap(), 1.0);

    // Defuzzification against normalise-first-then-dot.
    for _ in 0..120 {
        let k = rng.gen_range(1..=6);
        let values: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        let rates: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = values.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let oracle: f64 = values.iter().zip(&rates).map(|(&u, &r)| (u / total) * r).sum();
        let got = defuzzify(&Membership { values: values.clone() }, &rates).unwrap();
        assert!((got - oracle).abs() < 1e-9);
    }
    assert!(defuzzify(&Membership { values: vec![0.0, 0.0] }, &[0.3, 0.4]).is_err());

    // Disjunct class purity and the likelihood margin, recomputed per
    // instance from scratch: the purity by enumerating every leaf's
    // population ourselves, the margin through the one-shot density API.
    let mut checked = 0;
    for trial in 0..10 {
        let m = 12 + (trial * 2) % 19;
        let c = 2 + trial % 2;
        let ds = random_dataset(&mut rng, m, 2, c);
        let verdicts = ism_flags(&ds, 3).unwrap();
        let all: Vec<usize> = (0..m).collect();
        let tree = DecisionTree::grow(
            &ds,
            &all,
            TreeParams { max_depth: None, min_leaf: 1 },
        )
        .unwrap();
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..m {
            groups.entry(tree.leaf_for(ds.row(i))).or_default().push(i);
        }
        for i in 0..m {
            let members = &groups[&tree.leaf_for(ds.row(i))];
            let same = members.iter().filter(|&&j| ds.label(j) == ds.label(i)).count();
            let dcp_oracle = same as f64 / members.len() as f64;
            assert_eq!(verdicts[i].dcp, dcp_oracle, "dcp mismatch at {i}");

            let own = class_likelihood(&ds, ds.row(i), ds.label(i)).unwrap().0;
            let mut rival = f64::NEG_INFINITY;
            for r in 0..ds.n_classes() {
                if r != ds.label(i) {
                    rival = rival.max(class_likelihood(&ds, ds.row(i), r).unwrap().0);
                }
            }
            assert!((verdicts[i].cld - (own - rival)).abs() < 1e-9, "cld mismatch at {i}");
            checked += 1;
        }
    }
    assert!(checked >= 100, "only {checked} purity/margin cases covered");

    // Rank area under the ROC curve against O(n²) pair counting.
    for trial in 0..120 {
        let n = rng.gen_range(5..=40);
        let quantise = trial % 2 == 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s = rng.gen::<f64>();
                if quantise { (s * 5.0).round() / 5.0 } else { s }
            })
            .collect();
        let flags: Vec<bool> = loop {
            let f: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            if f.iter().any(|&x| x) && f.iter().any(|&x| !x) {
                break f;
            }
        };
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &fi) in flags.iter().enumerate() {
            if !fi {
                continue;
            }
            for (j, &fj) in flags.iter().enumerate() {
                if fj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        let got = auroc(&scores, &flags).unwrap();
        assert!((got - num / pairs).abs() < 1e-9, "auroc mismatch on trial {trial}");
    }
    assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());

    // Spearman correlation against counting ranks plus plain Pearson.
    let rank_oracle = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let less = v.iter().filter(|&&y| y < x).count() as f64;
                let eq = v.iter().filter(|&&y| y == x).count() as f64;
                less + (eq + 1.0) / 2.0
            })
            .collect()
    };
    let pearson = |a: &[f64], b: &[f64]| -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(&x, &y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|&x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.iter().map(|&y| (y - mb) * (y - mb)).sum();
        cov / (va * vb).sqrt()
    };
    fn draw(rng: &mut impl Rng, n: usize, quantise: bool) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let s = rng.gen::<f64>();
                if quantise { (s * 4.0).round() / 4.0 } else { s }
            })
            .collect()
    }
    for trial in 0..120 {
        let n = rng.gen_range(5..=40);
        let quantise = trial % 3 == 0;
        let a = draw(&mut rng, n, quantise);
        let b = draw(&mut rng, n, quantise);
        let (ra, rb) = (rank_oracle(&a), rank_oracle(&b));
        if ra.iter().all(|&r| r == ra[0]) || rb.iter().all(|&r| r == rb[0]) {
            continue;
        }
        let oracle = pearson(&ra, &rb);
        let (got, degenerate) = spearman(&a, &b).unwrap();
        assert!(!degenerate);
        assert!((got - oracle).abs() < 1e-9, "spearman mismatch on trial {trial}");
    }
    assert_eq!(spearman(&[3.0, 3.0, 3.0], &[1.0, 2.0, 5.0]).unwrap(), (0.0, true));

    println!("criterion 01 PASS: eight statistics match their oracles on 100+ randomised inputs each");
}

// ---------------------------------------------------------------------------
// Criterion 2 — complexity measures: ranges, invariances, brute force.

/// Neighbour labels of `x` by exhaustive scan in the min-max-scaled
/// space, ties broken towards the lower index.
fn brute_neighbour_labels(x: &[f64], ds: &LabelledDataset, k: usize) -> Vec<usize> {
    let m = ds.n_instances();
    let nf = ds.n_features();
    let mut mins = vec![f64::INFINITY; nf];
    let mut maxs = vec![f64::NEG_INFINITY; nf];
    for i in 0..m {
        for (j, &v) in ds.row(i).iter().enumerate() {
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
    }
    let scale = |r: &[f64]| -> Vec<f64> {
        (0..nf)
            .map(|j| {
                let span = maxs[j] - mins[j];
                if span > 0.0 { (r[j] - mins[j]) / span } else { 0.0 }
            })
            .collect()
    };
    let sx = scale(x);
    let mut dist: Vec<(f64, usize)> = (0..m)
        .map(|i| {
            let si = scale(ds.row(i));
            let d: f64 = si.iter().zip(&sx).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i)
        })
        .collect();
    dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    dist[..k].iter().map(|&(_, i)| ds.label(i)).collect()
}

/// Per-instance disjunct sizes and diversities from scratch: regrow the
/// reference trees, walk every instance to its leaf, and tally the leaf
/// populations ourselves.
fn brute_disjuncts(ds: &LabelledDataset) -> (Vec<f64>, Vec<f64>) {
    let m = ds.n_instances();
    let group = |tree: &DecisionTree| -> HashMap<usize, Vec<usize>> {
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..m {
            groups.entry(tree.leaf_for(ds.row(i))).or_default().push(i);
        }
        groups
    };

    let unpruned = grow_tree(ds, false, Seed(0)).unwrap();
    let groups = group(&unpruned);
    let max = groups.values().map(|g| g.len()).max().unwrap();
    let sizes = (0..m)
        .map(|i| {
            let size = groups[&unpruned.leaf_for(ds.row(i))].len();
            if max > 1 { (size - 1) as f64 / (max - 1) as f64 } else { 0.0 }
        })
        .collect();

    let pruned = grow_tree(ds, true, Seed(0)).unwrap();
    let groups = group(&pruned);
    let diversities = (0..m)
        .map(|i| {
            let labels: Vec<usize> =
                groups[&pruned.leaf_for(ds.row(i))].iter().map(|&j| ds.label(j)).collect();
            diversity_of_labels(&labels, ds.n_classes()).unwrap()
        })
        .collect();
    (sizes, diversities)
}

#[test]
fn criterion_02_measure_invariants() {
    let mut rng = Seed(202).rng();

    for trial in 0..12 {
        let m = 8 + (trial * 2) % 23;
        let nf = 1 + trial % 3;
        let c = 2 + trial % 2;
        let ds = random_dataset(&mut rng, m, nf, c);
        let k = 5.min(m - 1);

        // Brute-force equivalence of the neighbourhood and disjunct
        // measures; exact equality, not approximate.
        let (sizes, diversities) = brute_disjuncts(&ds);
        for i in 0..m {
            let labels = brute_neighbour_labels(ds.row(i), &ds, k);
            let kdn_oracle = diversity_of_labels(&labels, c).unwrap();
            assert_eq!(kdn(ds.row(i), &ds, k).unwrap(), kdn_oracle, "kdn at {i}");
            assert_eq!(disjunct_size(ds.row(i), &ds).unwrap(), sizes[i], "ds at {i}");
            assert_eq!(
                disjunct_class_diversity(ds.row(i), &ds).unwrap(),
                diversities[i],
                "dcd at {i}"
            );
        }

        // Ranges over the full vector.
        let ctx = MetaContext::fit(&ds, MetaConfig::default(), Seed(7)).unwrap();
        for i in 0..m {
            let (meta, _) = ctx.compute_all(ds.row(i), None).unwrap();
            let v = meta.as_array();
            for (d, name) in MetaFeatureVector::NAMES.iter().enumerate() {
                assert!(v[d].is_finite(), "{name} not finite");
                if *name == "ol" {
                    assert!(v[d] >= 0.0, "ol negative: {}", v[d]);
                } else {
                    assert!((0.0..=1.0).contains(&v[d]), "{name} out of range: {}", v[d]);
                }
            }
        }
    }

    // Permuting the class universe (relabelling) must not move the
    // label-symmetric measures; translating the feature space must not
    // move the outlierness.
    let ds = random_dataset(&mut rng, 20, 2, 2);
    let m = ds.n_instances();
    let rows: Vec<Vec<f64>> = (0..m).map(|i| ds.row(i).to_vec()).collect();
    let swapped: Vec<&str> = (0..m)
        .map(|i| if ds.class_name(ds.label(i)) == "a" { "b" } else { "a" })
        .collect();
    let ds_r = LabelledDataset::from_numeric_rows("swap", &["f0", "f1"], &rows, &swapped).unwrap();

    let shift = 3.7;
    let rows_t: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
    let labels: Vec<&str> = (0..m).map(|i| ds.class_name(ds.label(i))).collect();
    let ds_t = LabelledDataset::from_numeric_rows("shift", &["f0", "f1"], &rows_t, &labels).unwrap();

    for i in 0..m {
        let x = ds.row(i);
        let xt: Vec<f64> = x.iter().map(|v| v + shift).collect();
        assert!((kdn(x, &ds, 5).unwrap() - kdn(x, &ds_r, 5).unwrap()).abs() < 1e-9);
        assert!(
            (disjunct_class_diversity(x, &ds).unwrap()
                - disjunct_class_diversity(x, &ds_r).unwrap())
            .abs()
                < 1e-9
        );
        assert!(
            (class_level_outlierness(x, &ds, 5, None).unwrap().0
                - class_level_outlierness(x, &ds_r, 5, None).unwrap().0)
                .abs()
                < 1e-9
        );
        assert!(
            (outlierness(x, &ds, 5, None).unwrap().0 - outlierness(&xt, &ds_t, 5, None).unwrap().0)
                .abs()
                < 1e-9
        );
    }

    // A single-class universe cannot even be constructed, so every
    // class-contrast measure is unreachable there by design.
    assert!(LabelledDataset::from_numeric_rows(
        "mono",
        &["x"],
        &[vec![0.0], vec![1.0], vec![2.0]],
        &["a", "a", "a"],
    )
    .is_err());

    // Directional sanity: instances inside the overlap band of two
    // planted Gaussians carry higher neighbourhood disagreement than the
    // instances outside it.
    let overlap = gaussian_overlap(400, Seed(21));
    let mut inside = (0.0, 0usize);
    let mut outside = (0.0, 0usize);
    for i in 0..overlap.n_instances() {
        let r = overlap.row(i);
        let value = kdn(r, &overlap, 5).unwrap();
        let along = r[0] + r[1];
        if (along - 1.06).abs() < 0.75 {
            inside.0 += value;
            inside.1 += 1;
        } else {
            outside.0 += value;
            outside.1 += 1;
        }
    }
    assert!(inside.1 > 20 && outside.1 > 20, "band split degenerate");
    let mean_in = inside.0 / inside.1 as f64;
    let mean_out = outside.0 / outside.1 as f64;
    assert!(
        mean_in > mean_out,
        "mean kdn inside the overlap band ({mean_in:.3}) not above outside ({mean_out:.3})"
    );

    // Hand-worked reference values.
    let hand = LabelledDataset::from_numeric_rows(
        "hand4",
        &["x"],
        &[vec![0.0], vec![0.3], vec![0.6], vec![1.0]],
        &["a", "a", "b", "b"],
    )
    .unwrap();
    assert_eq!(kdn(&[0.4], &hand, 4).unwrap(), 1.0);
    let hand31 = LabelledDataset::from_numeric_rows(
        "hand31",
        &["x"],
        &[vec![0.0], vec![0.3], vec![0.6], vec![1.0]],
        &["a", "a", "a", "b"],
    )
    .unwrap();
    assert!((kdn(&[0.4], &hand31, 4).unwrap() - 0.8112781244591328).abs() < 1e-12);

    let mut blob_rows = Vec::new();
    let mut blob_labels = Vec::new();
    for i in 0..6 {
        blob_rows.push(vec![i as f64 * 0.01, 0.0]);
        blob_labels.push("a");
    }
    for i in 0..6 {
        blob_rows.push(vec![10.0 + i as f64 * 0.01, 10.0]);
        blob_labels.push("b");
    }
    let blobs =
        LabelledDataset::from_numeric_rows("blob", &["x", "y"], &blob_rows, &blob_labels).unwrap();
    assert_eq!(kdn(&[0.025, 0.0], &blobs, 5).unwrap(), 0.0);

    let mut rows135 = vec![vec![0.0]];
    rows135.extend((0..3).map(|_| vec![1.0]));
    rows135.extend((0..5).map(|_| vec![2.0]));
    let labels135 = ["a", "b", "b", "b", "a", "a", "a", "a", "a"];
    let ds135 =
        LabelledDataset::from_numeric_rows("leaf135", &["x"], &rows135, &labels135).unwrap();
    assert_eq!(disjunct_size(&[0.0], &ds135).unwrap(), 0.0);
    assert_eq!(disjunct_size(&[1.0], &ds135).unwrap(), 0.5);
    assert_eq!(disjunct_size(&[2.0], &ds135).unwrap(), 1.0);

    assert_eq!(disjunct_class_diversity(&[0.02, 0.0], &blobs).unwrap(), 0.0);
    let mut fold_rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.1]).collect();
    fold_rows.push(vec![0.55]);
    fold_rows.push(vec![5.0]);
    fold_rows.push(vec![5.1]);
    let mut fold_labels = vec!["a"; 12];
    fold_labels.extend(["b", "b", "b"]);
    let folded =
        LabelledDataset::from_numeric_rows("fold", &["x"], &fold_rows, &fold_labels).unwrap();
    let mut leaf_labels = vec![0usize; 12];
    leaf_labels.push(1);
    let expected = diversity_of_labels(&leaf_labels, 2).unwrap();
    assert_eq!(disjunct_class_diversity(&[0.55], &folded).unwrap(), expected);

    println!("criterion 02 PASS: ranges, invariances and brute-force equivalence hold on randomised datasets");
}

// ---------------------------------------------------------------------------
// Criterion 3 — measure directionality on the seeded benchmark.

#[test]
fn criterion_03_directionality() {
    let spec = ClassifierSpec::new(ClassifierKind::KnnClassifier);
    let mut seeds_ok = 0;
    for s in 0..5u64 {
        let ds = gaussian_overlap(2000, Seed(3000 + s));
        let (kb, _) =
            build_kb(&[KbSource::real(ds)], &spec, &KbBuildConfig::default(), Seed(3000 + s))
                .unwrap();
        let flags: Vec<bool> = kb.records.iter().map(|r| r.misclassified).collect();
        let mut all_ok = true;
        let mut line = format!("  seed {s}:");
        for (name, idx, positive) in [
            ("kdn", 0usize, true),
            ("ec", 5, true),
            ("dcd", 2, true),
            ("ds", 1, false),
            ("hd", 6, false),
        ] {
            let col: Vec<f64> = kb.records.iter().map(|r| r.meta.as_array()[idx]).collect();
            let result = univariate_or(&col, &flags).unwrap();
            let dir_ok = if positive { result.or > 1.0 } else { result.or < 1.0 };
            all_ok &= dir_ok && result.p_value < 0.05;
            line.push_str(&format!(" {name}={:.2}(p={:.1e})", result.or, result.p_value));
        }
        if all_ok {
            seeds_ok += 1;
        }
        println!("{line} -> {}", if all_ok { "ok" } else { "off" });
    }
    assert!(seeds_ok >= 4, "direction held in only {seeds_ok} of 5 seeds");
    println!("criterion 03 PASS: hardness measures point the expected way in {seeds_ok} of 5 seeds");
}

// ---------------------------------------------------------------------------
// Criterion 4 — estimator utility on the seeded benchmark.

#[test]
fn criterion_04_estimator_utility() {
    let mut strong = 0;
    let mut non_inferior = 0;
    for (kind, outcome) in bench_outcomes() {
        let flags = &outcome.misclassified;
        let est_auroc = auroc(&outcome.uncertainty, flags).unwrap();
        let base_auroc = auroc(&outcome.baseline_uncertainty, flags).unwrap();
        let prc = auprc(&outcome.uncertainty, flags).unwrap();
        if est_auroc >= 0.65 && prc.improvement >= 0.05 {
            strong += 1;
        }
        if est_auroc >= base_auroc - 0.03 {
            non_inferior += 1;
        }
        println!(
            "  {}: auroc {:.3} (baseline {:.3}), auprc {:.3} over prevalence {:.3}",
            kind.name(),
            est_auroc,
            base_auroc,
            prc.auprc,
            prc.prevalence
        );
    }
    assert!(strong >= 3, "only {strong} of 4 classifier families cleared the utility bar");
    assert!(non_inferior >= 2, "only {non_inferior} of 4 matched the confidence baseline");
    println!(
        "criterion 04 PASS: {strong} of 4 families clear auroc>=0.65 and auprc gain >=0.05; {non_inferior} match the baseline"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5 — estimator invariants on randomised knowledge bases.

fn random_kb(rng: &mut impl Rng, n: usize) -> KnowledgeBase {
    let records: Vec<KbRecord> = (0..n)
        .map(|i| {
            let mut a = [0.0; 7];
            for (d, v) in a.iter_mut().enumerate() {
                *v = if d == 3 { rng.gen::<f64>() * 3.0 } else { rng.gen::<f64>() };
            }
            KbRecord {
                meta: MetaFeatureVector::from_array(a),
                misclassified: rng.gen_bool(0.3),
                provenance: Provenance::Real,
                dataset_id: "rand".to_string(),
                model_kind: "knn_classifier".to_string(),
                instance_index: i,
                fold: i % 5,
            }
        })
        .collect();
    KnowledgeBase::new(records)
}

fn random_meta(rng: &mut impl Rng) -> MetaFeatureVector {
    let mut a = [0.0; 7];
    for (d, v) in a.iter_mut().enumerate() {
        *v = if d == 3 { rng.gen::<f64>() * 3.0 } else { rng.gen::<f64>() };
    }
    MetaFeatureVector::from_array(a)
}

#[test]
fn criterion_05_estimator_invariants() {
    let mut rng = Seed(505).rng();
    let config = EstimatorConfig {
        restarts: 2,
        max_iterations: 60,
        ..EstimatorConfig::default()
    };

    for rep in 0..3u64 {
        let kb = random_kb(&mut rng, 150 + 30 * rep as usize);
        let mut weights = [0.0; 7];
        for w in weights.iter_mut() {
            *w = 0.1 + 0.9 * rng.gen::<f64>();
        }
        let fit = fcm_fit(&kb, &weights, 3, &config, Seed(600 + rep)).unwrap();

        // The fuzzy objective of the winning restart never rises.
        for pair in fit.distortion_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "distortion rose: {pair:?}");
        }

        let lo = fit.model.rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = fit.model.rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..40 {
            let meta = random_meta(&mut rng);
            let mem = memberships(&fit.model, &meta);
            let total: f64 = mem.values.iter().sum();
            assert!((total - 1.0).abs() < 1e-9, "membership sum {total}");
            assert!(mem.values.iter().all(|&u| (-1e-12..=1.0 + 1e-12).contains(&u)));

            // The defuzzified value is a convex combination of rates.
            let u = estimate_uncertainty(&fit.model, &meta).unwrap();
            assert!(u >= lo - 1e-12 && u <= hi + 1e-12, "estimate {u} outside [{lo}, {hi}]");

            // Uniformly scaling weights and centers moves no membership.
            for lambda in [0.25, 4.0] {
                let mut scaled = fit.model.clone();
                for w in scaled.weights.iter_mut() {
                    *w *= lambda;
                }
                for center in scaled.centers.iter_mut() {
                    for v in center.iter_mut() {
                        *v *= lambda;
                    }
                }
                let mem_s = memberships(&scaled, &meta);
                let argmax = |m: &Membership| {
                    m.values
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                        .unwrap()
                        .0
                };
                for (a, b) in mem.values.iter().zip(&mem_s.values) {
                    assert!((a - b).abs() < 1e-9, "membership moved under scaling");
                }
                assert_eq!(argmax(&mem), argmax(&mem_s));
            }
        }

        // A single cluster degenerates to the global rate.
        let single = fcm_fit(&kb, &weights, 1, &config, Seed(700 + rep)).unwrap();
        let global = kb.misclassification_rate();
        for _ in 0..10 {
            let meta = random_meta(&mut rng);
            let u = estimate_uncertainty(&single.model, &meta).unwrap();
            assert!((u - global).abs() < 1e-12, "single-cluster estimate {u} != {global}");
        }
    }
    println!("criterion 05 PASS: membership, convexity, degeneracy, monotonicity and scale invariance hold");
}

// ---------------------------------------------------------------------------
// Criterion 6 — label-noise filter recovery and downstream effect.

/// Two tight, well-separated blobs with 5% of instances label-flipped,
/// drawn from the deeper half of each class so the noise sits inside the
/// blobs rather than on their rims.
fn flipped_blobs(n: usize, seed: Seed) -> (LabelledDataset, Vec<bool>) {
    let mut rng = seed.rng();
    let mut rows = Vec::with_capacity(n);
    let mut labels: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let shift = if c == 1 { 4.0 } else { 0.0 };
        let x: f64 = rng.sample::<f64, _>(StandardNormal) + shift;
        let y: f64 = rng.sample::<f64, _>(StandardNormal) + shift;
        rows.push(vec![x, y]);
        labels.push(c);
    }
    let mut depth: Vec<(f64, usize)> = rows
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (r, &c))| {
            let own = if c == 1 { (r[0] - 4.0, r[1] - 4.0) } else { (r[0], r[1]) };
            let rival = if c == 1 { (r[0], r[1]) } else { (r[0] - 4.0, r[1] - 4.0) };
            let d = (rival.0.powi(2) + rival.1.powi(2)).sqrt()
                - (own.0.powi(2) + own.1.powi(2)).sqrt();
            (d, i)
        })
        .collect();
    depth.sort_by(|a, b| b.0.total_cmp(&a.0));
    let eligible: Vec<usize> = depth[..n / 2].iter().map(|&(_, i)| i).collect();
    let chosen = rand::seq::index::sample(&mut rng, eligible.len(), n / 20);
    let mut flipped = vec![false; n];
    for j in chosen {
        let i = eligible[j];
        labels[i] = 1 - labels[i];
        flipped[i] = true;
    }
    let names: Vec<&str> = labels.iter().map(|&c| if c == 1 { "b" } else { "a" }).collect();
    let ds = LabelledDataset::from_numeric_rows("blobs", &["x", "y"], &rows, &names).unwrap();
    (ds, flipped)
}

#[test]
fn criterion_06_label_noise_filter() {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut planted = 0usize;
    let mut clean = 0usize;
    for s in 0..5u64 {
        let (ds, flipped) = flipped_blobs(400, Seed(1000 + s));
        let verdicts = ism_flags(&ds, 9).unwrap();
        for (v, &f) in verdicts.iter().zip(&flipped) {
            match (v.is_ism, f) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                _ => {}
            }
            if f {
                planted += 1;
            } else {
                clean += 1;
            }
        }
    }
    let recall = tp as f64 / planted as f64;
    let fpr = fp as f64 / clean as f64;
    println!("  recovery over 5 seeds: recall {recall:.3}, false-positive rate {fpr:.4}");
    assert!(recall >= 0.70, "recall {recall:.3} below 0.70");
    assert!(fpr <= 0.10, "false-positive rate {fpr:.4} above 0.10");

    // Dropping the suspects from the benchmark must help the estimator.
    let before_outcome = &bench_outcomes()
        .iter()
        .find(|(k, _)| *k == ClassifierKind::GaussianNb)
        .unwrap()
        .1;
    let auroc_before = auroc(&before_outcome.uncertainty, &before_outcome.misclassified).unwrap();
    let ds = benchmark();
    let verdicts = ism_flags(ds, 9).unwrap();
    let keep: Vec<usize> = (0..ds.n_instances()).filter(|&i| !verdicts[i].is_ism).collect();
    let filtered = ds.subset(&keep, "bench-filtered").unwrap();
    let after = nested_cv_run(
        &filtered,
        aux_kb(),
        &ClassifierSpec::new(ClassifierKind::GaussianNb),
        &bench_config(),
        Seed(7),
    )
    .unwrap();
    let auroc_after = auroc(&after.uncertainty, &after.misclassified).unwrap();
    println!(
        "  removing {} suspects moves auroc {:.3} -> {:.3}",
        ds.n_instances() - keep.len(),
        auroc_before,
        auroc_after
    );
    assert!(
        auroc_after > auroc_before,
        "auroc fell after filtering: {auroc_before:.4} -> {auroc_after:.4}"
    );
    println!("criterion 06 PASS: recall {recall:.2} at fpr {fpr:.3}; filtering raises auroc {auroc_before:.3} -> {auroc_after:.3}");
}

// ---------------------------------------------------------------------------
// Criterion 7 — abstention sweeps improve with stricter thresholds.

#[test]
fn criterion_07_abstention() {
    for (kind, outcome) in bench_outcomes() {
        let curve = abstention_curve(&outcome.uncertainty, &outcome.misclassified).unwrap();
        let at25 = curve.misclassified_pct[4];
        let at95 = curve.misclassified_pct[18];
        assert_eq!(curve.thresholds[4], 25.0);
        assert_eq!(curve.thresholds[18], 95.0);
        assert!(
            at25 <= at95,
            "{}: retained-error at the 25th percentile ({at25:.2}) above the 95th ({at95:.2})",
            kind.name()
        );
        let (rho, degenerate) = spearman(&curve.thresholds, &curve.misclassified_pct).unwrap();
        assert!(!degenerate, "{}: flat abstention curve", kind.name());
        assert!(rho > 0.0, "{}: threshold/error correlation {rho:.3} not positive", kind.name());
        println!("  {}: error {at25:.2}% -> {at95:.2}%, spearman {rho:.3}", kind.name());
    }
    println!("criterion 07 PASS: retained error grows with the retention threshold for all families");
}

// ---------------------------------------------------------------------------
// Criterion 8 — attribution axioms and the permutation oracle.

/// Mean estimate over the background with the masked measures overridden
/// by the instance's values: the coalition value function.
fn coalition_values(
    model: &FuzzyClusterModel,
    instance: &[f64; 7],
    background: &[[f64; 7]],
) -> Vec<f64> {
    (0..128usize)
        .map(|mask| {
            let mut total = 0.0;
            for row in background {
                let mut composite = *row;
                for (d, v) in composite.iter_mut().enumerate() {
                    if mask & (1 << d) != 0 {
                        *v = instance[d];
                    }
                }
                total += estimate_uncertainty(model, &MetaFeatureVector::from_array(composite))
                    .unwrap();
            }
            total / background.len() as f64
        })
        .collect()
}

/// Shapley values straight from the definition: marginal contributions
/// averaged over every one of the 5040 orderings of the seven measures.
fn permutation_shapley(values: &[f64]) -> [f64; 7] {
    fn walk(arr: &mut [usize; 7], start: usize, values: &[f64], phi: &mut [f64; 7], count: &mut usize) {
        if start == 7 {
            let mut mask = 0usize;
            for &d in arr.iter() {
                phi[d] += values[mask | (1 << d)] - values[mask];
                mask |= 1 << d;
            }
            *count += 1;
            return;
        }
        for i in start..7 {
            arr.swap(start, i);
            walk(arr, start + 1, values, phi, count);
            arr.swap(start, i);
        }
    }
    let mut phi = [0.0; 7];
    let mut order = [0usize, 1, 2, 3, 4, 5, 6];
    let mut count = 0;
    walk(&mut order, 0, values, &mut phi, &mut count);
    assert_eq!(count, 5040);
    for p in phi.iter_mut() {
        *p /= 5040.0;
    }
    phi
}

#[test]
fn criterion_08_attribution_axioms() {
    let mut rng = Seed(808).rng();
    let kb = random_kb(&mut rng, 60);
    let config = EstimatorConfig {
        restarts: 2,
        max_iterations: 80,
        ..EstimatorConfig::default()
    };
    let model = fcm_fit(&kb, &[1.0; 7], 3, &config, Seed(81)).unwrap().model;
    let background: Vec<[f64; 7]> = kb.records.iter().map(|r| r.meta.as_array()).collect();

    for trial in 0..20 {
        let meta = random_meta(&mut rng);
        let attr = shapley(&model, &meta, &kb, Seed(82)).unwrap();
        assert!(
            attr.efficiency_residual().abs() < 1e-9,
            "efficiency residual {} on trial {trial}",
            attr.efficiency_residual()
        );
        let values = coalition_values(&model, &meta.as_array(), &background);
        let oracle = permutation_shapley(&values);
        for d in 0..7 {
            assert!(
                (attr.contributions[d] - oracle[d]).abs() < 1e-9,
                "contribution {d} mismatch on trial {trial}: {} vs {}",
                attr.contributions[d],
                oracle[d]
            );
        }
    }

    // Dummy: a measure that agrees with every background record earns
    // exactly nothing.
    let mut dummy_records = random_kb(&mut rng, 40).records;
    for r in dummy_records.iter_mut() {
        let mut a = r.meta.as_array();
        a[3] = 0.7;
        r.meta = MetaFeatureVector::from_array(a);
    }
    let dummy_kb = KnowledgeBase::new(dummy_records);
    let dummy_model = fcm_fit(&dummy_kb, &[1.0; 7], 2, &config, Seed(83)).unwrap().model;
    let mut probe = random_meta(&mut rng).as_array();
    probe[3] = 0.7;
    let attr = shapley(&dummy_model, &MetaFeatureVector::from_array(probe), &dummy_kb, Seed(84))
        .unwrap();
    assert!(attr.contributions[3].abs() <= 1e-12, "dummy measure earned {}", attr.contributions[3]);

    // Symmetry: measures the model and background treat identically earn
    // identical shares.
    let sym_model = FuzzyClusterModel {
        version: ESTIMATOR_FORMAT_VERSION,
        centers: vec![[0.2; 7], [0.8; 7]],
        fuzzifier: 2.0,
        weights: [1.0; 7],
        rates: vec![0.1, 0.6],
        n_clusters: 2,
        empty_cluster_fallback: false,
    };
    let sym_records: Vec<KbRecord> = (0..40)
        .map(|i| {
            let mut a = [0.0; 7];
            let shared = rng.gen::<f64>();
            a[0] = shared;
            a[1] = shared;
            for v in a.iter_mut().skip(2) {
                *v = rng.gen::<f64>();
            }
            KbRecord {
                meta: MetaFeatureVector::from_array(a),
                misclassified: i % 4 == 0,
                provenance: Provenance::Real,
                dataset_id: "sym".to_string(),
                model_kind: "knn_classifier".to_string(),
                instance_index: i,
                fold: 0,
            }
        })
        .collect();
    let sym_kb = KnowledgeBase::new(sym_records);
    let mut sym_meta = random_meta(&mut rng).as_array();
    sym_meta[0] = 0.44;
    sym_meta[1] = 0.44;
    let attr = shapley(&sym_model, &MetaFeatureVector::from_array(sym_meta), &sym_kb, Seed(85))
        .unwrap();
    assert!(
        (attr.contributions[0] - attr.contributions[1]).abs() <= 1e-12,
        "symmetric measures diverged: {} vs {}",
        attr.contributions[0],
        attr.contributions[1]
    );

    println!("criterion 08 PASS: efficiency, dummy and symmetry hold; 20 attributions match the permutation oracle");
}

// ---------------------------------------------------------------------------
// Criterion 9 — generator reaches representative complexity targets.

#[test]
fn criterion_09_generator_targets() {
    for (f1, n1) in [(0.2, 0.2), (0.6, 0.4), (0.9, 0.8)] {
        let target = ComplexityTarget { f1, n1, instances: 300, features: 2, classes: 2 };
        let mut hits = 0;
        for s in 0..3u64 {
            let out = generate(&target, &GaSettings::default(), Seed(40 + s)).unwrap();
            let df = (out.record.achieved_f1 - f1).abs();
            let dn = (out.record.achieved_n1 - n1).abs();
            if df <= 0.1 && dn <= 0.1 {
                hits += 1;
            }
            println!(
                "  target ({f1:.1},{n1:.1}) seed {s}: achieved ({:.3},{:.3})",
                out.record.achieved_f1, out.record.achieved_n1
            );
        }
        assert!(hits >= 2, "target ({f1},{n1}) hit in only {hits} of 3 seeds");
    }
    println!("criterion 09 PASS: all three complexity targets reached within 0.1 in at least 2 of 3 seeds");
}

// ---------------------------------------------------------------------------
// Criterion 10 — the full pipeline is byte-reproducible.

#[test]
fn criterion_10_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    fs::create_dir_all(&first).unwrap();
    fs::create_dir_all(&second).unwrap();
    common::run_pipeline(dir.path(), &first);
    common::run_pipeline(dir.path(), &second);

    let mut names: Vec<String> = fs::read_dir(&first)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in &names {
        let a = fs::read(first.join(name)).unwrap();
        let b = fs::read(second.join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} differs between identically seeded runs");
    }
    println!(
        "criterion 10 PASS: {} artifacts byte-identical across two identically seeded pipeline runs",
        names.len()
    );
}
