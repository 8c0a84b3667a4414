use std::f64::consts::PI;

use cpc_core::experiments::{preset, solve_track, InitSpec};
use cpc_core::initializer::{custom_orientation_guess, default_guess, direct_guess, pointmass_guess, GuessKind};
use cpc_core::quad_model::rotate_vector;
use cpc_core::transcription::T_MIN;
use cpc_core::{assemble, QuadConfig, Track};
use cpc_nlp::{Nlp, SolverConfig};
use proptest::prelude::*;

fn five_gates() -> Track {
    let wps = (1..=5).map(|i| [2.0 * i as f64, (i % 2) as f64, 1.0]).collect();
    Track::new([0.0, 0.0, 1.0], wps, 0.3)
}

#[test]
fn switch_nodes_are_equally_spaced() {
    let g = default_guess(&five_gates(), &QuadConfig::standard(), 125).unwrap();
    let l = g.layout;
    let switches: Vec<usize> = (0..5).map(|j| l.switch_node(j)).collect();
    assert_eq!(switches, vec![25, 50, 75, 100, 125]);
    // lambda drops from 1 to 0 exactly at each switch node
    for (j, &kj) in switches.iter().enumerate() {
        assert_eq!(g.z0[l.lambda(kj - 1).start + j], 1.0);
        assert_eq!(g.z0[l.lambda(kj).start + j], 0.0);
        assert_eq!(g.z0[l.mu(kj - 1).start + j], 1.0);
    }
}

#[test]
fn default_guess_breaks_only_dynamics_and_complementarity() {
    let track = five_gates();
    let cfg = QuadConfig::standard();
    let g = default_guess(&track, &cfg, 40).unwrap();
    let p = assemble(&track, &cfg, 40).unwrap();
    let mut c = vec![0.0; p.num_constraints()];
    p.constraints(&g.z0, &mut c);
    let r = p.residual_groups(&c);
    assert_eq!(r.progress, 0.0);
    assert_eq!(r.inequality, 0.0);
    assert!(r.dynamics > 0.0);

    let n = p.num_variables();
    let (mut lo, mut hi) = (vec![0.0; n], vec![0.0; n]);
    p.variable_bounds(&mut lo, &mut hi);
    for i in 0..n {
        assert!(lo[i] <= g.z0[i] && g.z0[i] <= hi[i], "variable {i}");
    }
    let l = g.layout;
    assert!(g.z0[l.lambda(0)].iter().all(|&v| v == 1.0));
    assert!(g.z0[l.lambda(40)].iter().all(|&v| v == 0.0));
    for j in 0..5 {
        let total: f64 = (0..40).map(|k| g.z0[l.mu(k).start + j]).sum();
        assert_eq!(total, 1.0);
    }
    for k in 0..=40 {
        let q = &g.z0[l.state(k)][3..7];
        assert!((q.iter().map(|c| c * c).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn guess_passes_through_waypoints() {
    let track = five_gates();
    let g = default_guess(&track, &QuadConfig::standard(), 50).unwrap();
    let l = g.layout;
    for (j, w) in track.waypoints.iter().enumerate() {
        assert_eq!(&g.z0[l.state(l.switch_node(j))][..3], w);
    }
    assert!((g.z0[0] - track.path_length()).abs() < 1e-12);
}

#[test]
fn zero_length_track_floors_time() {
    let track = Track::new([1.0, 1.0, 1.0], vec![[1.0, 1.0, 1.0]], 0.1);
    let g = default_guess(&track, &QuadConfig::standard(), 10).unwrap();
    assert_eq!(g.z0[0], T_MIN);
    assert_eq!(direct_guess(&track, &QuadConfig::standard(), 10).unwrap().z0[0], T_MIN);
}

#[test]
fn too_few_nodes_is_an_error() {
    assert!(default_guess(&five_gates(), &QuadConfig::standard(), 9).is_err());
}

#[test]
fn zero_angles_reproduce_default_guess() {
    let track = five_gates();
    let base = default_guess(&track, &QuadConfig::standard(), 50).unwrap();
    let z = [0.0, 0.0, 1.0];
    let g = custom_orientation_guess(&base, &[(z, 0.0); 6]).unwrap();
    assert_eq!(g.z0, base.z0);
    assert_eq!(g.kind, GuessKind::Custom);
    assert!(custom_orientation_guess(&base, &[(z, 0.0); 5]).is_err());
}

#[test]
fn flip_guess_turns_upside_down_at_the_top() {
    let p = preset("vertical-turn-rq-flip").unwrap();
    let cfg = p.config();
    let base = default_guess(&p.track, &cfg, p.nodes).unwrap();
    let y = [0.0, 1.0, 0.0];
    let g = custom_orientation_guess(&base, &[(y, 0.0), (y, PI), (y, 2.0 * PI), (y, 2.0 * PI)]).unwrap();
    let l = g.layout;
    let body_z = |k: usize| {
        let q = &g.z0[l.state(k)][3..7];
        rotate_vector(&[q[0], q[1], q[2], q[3]], &[0.0, 0.0, 1.0])
    };
    assert!((body_z(l.switch_node(0))[2] + 1.0).abs() < 1e-12);
    assert!((body_z(l.switch_node(1))[2] - 1.0).abs() < 1e-12);
    // halfway to the top the thrust is horizontal
    let mid = l.switch_node(0) / 2;
    assert!(body_z(mid)[2].abs() < 0.1);
    // every interpolated attitude is a unit quaternion
    for k in 0..=p.nodes {
        let q = &g.z0[l.state(k)][3..7];
        assert!((q.iter().map(|c| c * c).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn guesses_are_deterministic(
        wps in prop::collection::vec(prop::array::uniform3(-10.0..10.0f64), 1..5),
        extra in 0usize..20,
    ) {
        let track = Track::new([0.0; 3], wps.clone(), 0.2);
        let n = 2 * wps.len() + extra;
        let cfg = QuadConfig::standard();
        let a = default_guess(&track, &cfg, n).unwrap();
        let b = default_guess(&track, &cfg, n).unwrap();
        prop_assert_eq!(&a, &b);
        // progress rows hold exactly for any track
        let p = assemble(&track, &cfg, n).unwrap();
        let mut c = vec![0.0; p.num_constraints()];
        p.constraints(&a.z0, &mut c);
        let r = p.residual_groups(&c);
        prop_assert_eq!(r.progress, 0.0);
        prop_assert_eq!(r.inequality, 0.0);
    }
}

#[test]
fn pointmass_guess_is_close_on_a_straight_line() {
    let track = Track::new([0.0, 0.0, 1.0], vec![[6.0, 0.0, 1.0], [12.0, 0.0, 1.0]], 0.3);
    let cfg = QuadConfig::standard();
    let (g, report) = pointmass_guess(&track, &cfg, 40, &SolverConfig::default()).unwrap();
    assert_eq!(g.kind, GuessKind::PointMass);
    assert!(!report.stages.is_empty());
    let l = g.layout;
    assert_eq!(&g.z0[l.state(0)][3..7], &[1.0, 0.0, 0.0, 0.0]);
    for k in 0..=40 {
        let lam = &g.z0[l.lambda(k)];
        assert!(lam[0] <= lam[1] + 1e-9, "node {k}: {lam:?}");
    }

    let solved = solve_track("line", &track, &cfg, 40, &InitSpec::Default, &SolverConfig::default()).unwrap();
    assert!(solved.converged());
    let t = solved.t_n();
    assert!((g.z0[0] - t).abs() <= 0.2 * t, "guess {} vs {t}", g.z0[0]);
}
