//! Monte Carlo checks of error-rate control.

mod common;

use rayon::prelude::*;

use hdprec::inference::{block_test_matrix, recover_support, BlockTestConfig, Group};
use hdprec::simulate::{generate, generate_ar, DgpSpec, Structure};
use hdprec::{IndexSet, RngSpec, SymMatrix};

use common::{binom_se, fit_and_bootstrap};

#[test]
fn support_recovery_controls_fwer_under_the_null() {
    let (p, n, reps) = (20, 200, 500);
    let sigma = SymMatrix::identity(p);
    let set = IndexSet::all_offdiag(p).unwrap();
    let root = RngSpec::new(31, "fwer");
    let any_selected: Vec<(bool, bool)> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let data = generate_ar(&sigma, n, 0.0, &root.child_indexed("data", i)).unwrap();
            let f = fit_and_bootstrap(&data, &set, 500, root.child_indexed("kmb", i)).unwrap();
            let plain = recover_support(&f.est.omega_hat, &set, &f.plain, n, 0.05).unwrap();
            let stud = recover_support(&f.est.omega_hat, &set, &f.stud, n, 0.05).unwrap();
            (!plain.selected.is_empty(), !stud.selected.is_empty())
        })
        .collect();
    let plain = any_selected.iter().filter(|s| s.0).count() as f64 / reps as f64;
    let stud = any_selected.iter().filter(|s| s.1).count() as f64 / reps as f64;
    println!("FWER KMB {plain:.3}, SKMB {stud:.3} (se {:.3})", binom_se(0.05, reps as usize));
    assert!((0.01..=0.10).contains(&plain), "KMB FWER {plain}");
    assert!((0.01..=0.10).contains(&stud), "SKMB FWER {stud}");
}

#[test]
fn block_tests_find_the_true_blocks() {
    let n = 400;
    let groups = vec![
        Group {
            name: "G1".into(),
            members: (0..5).collect(),
        },
        Group {
            name: "G2".into(),
            members: (5..10).collect(),
        },
    ];
    let root = RngSpec::new(32, "blocks");
    let hits = (0..100u64)
        .into_par_iter()
        .filter(|&i| {
            let dgp = DgpSpec {
                structure: Structure::B,
                p: 10,
                rho: 0.0,
                n,
                rng: root.child_indexed("data", i),
            };
            let data = generate(&dgp).unwrap();
            let mut cfg = BlockTestConfig {
                fdr: 0.05,
                within: true,
                ..BlockTestConfig::default()
            };
            cfg.boot.draws = 500;
            cfg.boot.rng = root.child_indexed("kmb", i);
            let report = block_test_matrix(&data, &groups, &cfg).unwrap();
            report
                .edges
                .iter()
                .all(|e| e.rejected == (e.group1 == e.group2))
        })
        .count();
    println!("blocks recovered exactly in {hits} of 100 replicates");
    assert!(hits >= 90);
}
