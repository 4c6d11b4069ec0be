mod common;

use std::sync::Arc;

use common::*;
use levy_hjb::control::{
    brute_force_value, cost_of_policy, fundamental_residual, path_bracket, write_verification_csv, VerificationRow,
};
use levy_hjb::functions::{DriftPreset, FunctionPreset};
use levy_hjb::ou::semigroup_apply;
use levy_hjb::policy::{constant_family, extract_feedback, FeedbackPolicy, Policy};
use levy_hjb::state::{solve_state_path, PicardSpec};
use levy_hjb::RngStream;

#[test]
fn constant_terminal_cost_has_no_variance() {
    let model = desk_model(2);
    let prob = problem(2, DriftPreset::Tanh { scale: 0.3 }, FunctionPreset::Zero, FunctionPreset::Constant { value: 0.8 }, 1.0, 0.5);
    let zero = FeedbackPolicy::constant(vec![0.0, 0.0]);
    let c = cost_of_policy(&model, &prob, &zero, 0.0, &[0.1, 0.2], 0.05, 500, RngStream::new(1, 0)).unwrap();
    assert!((c.mean - 0.8).abs() < 1e-14);
    assert!(c.std_error < 1e-14);
    assert_eq!(c.n_paths, 500);
}

#[test]
fn uncontrolled_cost_is_the_semigroup_of_the_terminal_cost() {
    let model = desk_model(2);
    let h = ramp();
    let prob = problem(2, DriftPreset::Zero, FunctionPreset::Zero, h.clone(), 1.0, 0.5);
    let zero = FeedbackPolicy::constant(vec![0.0, 0.0]);
    let x = [0.2, -0.1];
    let c = cost_of_policy(&model, &prob, &zero, 0.1, &x, 0.05, 20_000, RngStream::new(2, 0)).unwrap();
    let p = semigroup_apply(&model, &h, 0.4, &x, 20_000, RngStream::new(3, 0)).unwrap();
    let joint = (c.std_error.powi(2) + p.std_error.powi(2)).sqrt();
    assert!((c.mean - p.estimate).abs() < 3.0 * joint, "{} vs {} (se {joint})", c.mean, p.estimate);
}

#[test]
fn constant_control_cost_is_exact() {
    let model = desk_model(1);
    let prob = problem(1, DriftPreset::Zero, FunctionPreset::Zero, FunctionPreset::Zero, 1.0, 1.0);
    let c = cost_of_policy(&model, &prob, &FeedbackPolicy::constant(vec![0.6]), 0.25, &[0.0], 0.05, 100, RngStream::new(4, 0)).unwrap();
    assert!((c.mean - 0.5 * 0.36 * 0.75).abs() < 1e-14);
}

#[test]
fn zero_data_gives_zero_value_and_cost() {
    let model = desk_model(1);
    let prob = problem(1, DriftPreset::Tanh { scale: 0.3 }, FunctionPreset::Zero, FunctionPreset::Zero, 1.0, 0.5);
    let sol = Arc::new(small_solution(&model, &prob, 17, 8, 200));
    let fb = extract_feedback(sol.clone()).unwrap();
    let r = fundamental_residual(&model, &prob, &sol, &fb, 0.0, &[0.3], 0.5 / 16.0, 200, RngStream::new(5, 0)).unwrap();
    assert_eq!(r.lhs, 0.0);
    assert_eq!(r.rhs.mean, 0.0);
    assert_eq!(r.bracket.estimate, 0.0);
}

#[test]
fn bracket_is_nonpositive_and_zero_for_the_feedback() {
    let model = desk_model(1);
    let prob = desk_problem(1);
    let sol = Arc::new(small_solution(&model, &prob, 33, 8, 2000));
    let fb = extract_feedback(sol.clone()).unwrap();
    let other = FeedbackPolicy::constant(vec![0.4]);
    let step = 0.5 / 16.0;
    for i in 0..50 {
        let rng = RngStream::new(6, i);
        let p = solve_state_path(&model, &prob, &other, 0.0, &[0.2], step, rng, PicardSpec::default()).unwrap();
        assert!(path_bracket(&sol, &p) <= 1e-15);
        let p = solve_state_path(&model, &prob, &fb, 0.0, &[0.2], step, rng, PicardSpec::default()).unwrap();
        assert!(path_bracket(&sol, &p).abs() <= 1e-15);
    }
}

#[test]
fn feedback_dominates_and_attains_on_a_small_problem() {
    let model = desk_model(1);
    let prob = desk_problem(1);
    let sol = Arc::new(small_solution(&model, &prob, 33, 8, 4000));
    let fb = extract_feedback(sol.clone()).unwrap();
    let step = 0.5 / 16.0;
    let rng = RngStream::new(7, 0);
    let r = fundamental_residual(&model, &prob, &sol, &fb, 0.0, &[0.1], step, 4000, rng).unwrap();
    let row = VerificationRow::new(fb.label(), 0.0, &[0.1], &r);
    assert!(row.attainment_holds(), "{row:?} {:?}", r.budget);
    assert!(row.bracket_vanishes());
    for c in constant_family(1, 1.0, 5) {
        let r = fundamental_residual(&model, &prob, &sol, &c, 0.0, &[0.1], step, 2000, rng).unwrap();
        let row = VerificationRow::new(c.label(), 0.0, &[0.1], &r);
        assert!(row.dominance_holds(), "{row:?}");
        assert!(r.bracket.estimate <= 0.0);
    }
}

#[test]
fn unconverged_solutions_are_not_verified() {
    let model = desk_model(1);
    let prob = desk_problem(1);
    let mut sol = small_solution(&model, &prob, 17, 4, 200);
    sol.converged = false;
    let zero = FeedbackPolicy::constant(vec![0.0]);
    assert!(fundamental_residual(&model, &prob, &sol, &zero, 0.0, &[0.0], 0.125, 10, RngStream::new(0, 0)).is_err());
}

#[test]
fn brute_force_examples() {
    let model = desk_model(1);
    let prob = desk_problem(1);
    let (step, rng, x) = (0.05, RngStream::new(8, 0), [0.0]);
    let a = FeedbackPolicy::constant(vec![0.5]);
    let b = FeedbackPolicy::constant(vec![-0.5]);

    let single = cost_of_policy(&model, &prob, &a, 0.0, &x, step, 300, rng).unwrap();
    let (best, idx, _) = brute_force_value(&model, &prob, 0.0, &x, &[&a], step, 300, rng).unwrap();
    assert_eq!((best, idx), (single, 0));

    // duplicates agree bitwise under common random numbers; the lowest index wins
    let (best, idx, all) = brute_force_value(&model, &prob, 0.0, &x, &[&b, &a, &a], step, 300, rng).unwrap();
    assert_eq!(all[1], all[2]);
    if best == all[1] {
        assert_eq!(idx, 1);
    }

    // enlarging the family never raises the minimum
    let mut fam: Vec<FeedbackPolicy> = constant_family(1, 1.0, 3);
    let mut prev = f64::INFINITY;
    for extra in [0.2, -0.7, 0.9] {
        fam.push(FeedbackPolicy::constant(vec![extra]));
        let refs: Vec<&dyn Policy> = fam.iter().map(|p| p as &dyn Policy).collect();
        let (best, _, _) = brute_force_value(&model, &prob, 0.0, &x, &refs, step, 300, rng).unwrap();
        assert!(best.mean <= prev);
        prev = best.mean;
    }
    assert!(brute_force_value(&model, &prob, 0.0, &x, &[], step, 300, rng).is_err());
}

#[test]
fn costs_respect_the_data_lower_bound() {
    // g >= 0 and h >= -1 bound every cost from below by -1
    let model = desk_model(1);
    let prob = desk_problem(1);
    for c in constant_family(1, 1.0, 5) {
        let e = cost_of_policy(&model, &prob, &c, 0.0, &[0.3], 0.05, 300, RngStream::new(9, 0)).unwrap();
        assert!(e.mean >= -1.0);
    }
}

#[test]
fn verification_csv_layout() {
    let model = desk_model(2);
    let prob = desk_problem(2);
    let sol = Arc::new(small_solution(&model, &prob, 9, 4, 200));
    let fb = extract_feedback(sol.clone()).unwrap();
    let r = fundamental_residual(&model, &prob, &sol, &fb, 0.0, &[0.1, 0.2], 0.125, 50, RngStream::new(0, 0)).unwrap();
    let rows = vec![VerificationRow::new(fb.label(), 0.0, &[0.1, 0.2], &r)];
    let mut buf = Vec::new();
    write_verification_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("policy,t0,x,lhs,rhs,rhs_std_error,bracket_mean,bracket_std_error,clipped_fraction,grid_budget,dominance")
    );
    let row = lines.next().unwrap();
    assert!(row.contains("0.1;0.2"));
    assert!(lines.next().is_none());
}
