use approx::assert_relative_eq;
use cpc_core::quad_model::{
    hover_thrusts, input_to_wrench, quat_from_axis_angle, quat_multiply, rk4_step, rotate_vector, state_derivative,
    QuadConfig, QuadState, RotorThrusts, GRAVITY,
};
use proptest::prelude::*;

fn state(p: [f64; 3], q: [f64; 4], v: [f64; 3], w: [f64; 3]) -> QuadState {
    QuadState {
        position: p,
        orientation: q,
        velocity: v,
        body_rate: w,
    }
}

// rotation matrix built column by column from the quaternion components
fn rotation_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

fn matvec(m: [[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

#[test]
fn equal_thrusts_give_no_torque() {
    let cfg = QuadConfig::standard();
    let (f, tau) = input_to_wrench(&RotorThrusts([2.4525; 4]), &cfg);
    assert_relative_eq!(f, 9.81, epsilon = 1e-12);
    assert_eq!(tau, [0.0, 0.0, 0.0]);
}

#[test]
fn roll_torque_from_front_rotors() {
    let cfg = QuadConfig::standard();
    let (f, tau) = input_to_wrench(&RotorThrusts([5.0, 5.0, 0.25, 0.25]), &cfg);
    assert_relative_eq!(f, 10.5, epsilon = 1e-12);
    assert_relative_eq!(tau[0], 0.15 / 2f64.sqrt() * 9.5, epsilon = 1e-12);
    assert_relative_eq!(tau[0], 1.00763, epsilon = 1e-5);
    assert_eq!(tau[1], 0.0);
    assert_eq!(tau[2], 0.0);
}

#[test]
fn yaw_torque_from_diagonal_rotors() {
    let cfg = QuadConfig::standard();
    let (_, tau) = input_to_wrench(&RotorThrusts([5.0, 0.25, 5.0, 0.25]), &cfg);
    assert_relative_eq!(tau[2], 0.095, epsilon = 1e-12);
}

#[test]
fn drag_coefficient_closed_form() {
    let oracle = |t_max: f64, m: f64, v_max: f64| ((4.0 * t_max / m).powi(2) - GRAVITY * GRAVITY).sqrt() / v_max;
    let rq = QuadConfig::rq();
    assert_relative_eq!(
        rq.drag_coefficient().unwrap(),
        oracle(16.0, 0.76, 42.0),
        epsilon = 1e-12
    );
    assert_relative_eq!(rq.drag_coefficient().unwrap(), 1.99136, epsilon = 1e-5);
    let ms = QuadConfig::ms();
    assert_relative_eq!(
        ms.drag_coefficient().unwrap(),
        oracle(4.179, 1.0, 19.0),
        epsilon = 1e-12
    );
    assert_relative_eq!(ms.drag_coefficient().unwrap(), 0.71236, epsilon = 1e-5);
    let std = QuadConfig::standard();
    assert!(std.drag_coefficient().is_err());
    assert_eq!(std.drag(), 0.0);
}

#[test]
fn hover_is_an_equilibrium() {
    let cfg = QuadConfig::standard();
    let u = hover_thrusts(&cfg).unwrap();
    assert_eq!(u.0, [2.4525; 4]);
    let x = QuadState::hover_at([1.0, -2.0, 3.0]);
    assert!(state_derivative(&x, &u, &cfg).iter().all(|d| d.abs() < 1e-12));
    let next = rk4_step(&x, &u, 0.01, &cfg);
    for (a, b) in next.to_array().iter().zip(x.to_array()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn hover_thrusts_of_every_config() {
    assert_relative_eq!(
        hover_thrusts(&QuadConfig::rq()).unwrap().0[0],
        0.76 * 9.81 / 4.0,
        epsilon = 1e-12
    );
    assert_relative_eq!(hover_thrusts(&QuadConfig::rq()).unwrap().0[0], 1.8639, epsilon = 1e-4);
    let sim = QuadConfig::sim();
    assert!(sim.mass * 9.81 / 4.0 < sim.thrust_max);
    for name in QuadConfig::preset_names() {
        let cfg = QuadConfig::preset(name).unwrap();
        let t = hover_thrusts(&cfg).unwrap().0[0];
        assert!(t > cfg.thrust_min && t < cfg.thrust_max, "{name}: {t}");
    }
    let mut weak = QuadConfig::standard();
    weak.thrust_max = 2.0;
    assert!(hover_thrusts(&weak).is_err());
}

#[test]
fn free_fall_and_pure_spin() {
    let cfg = QuadConfig::standard();
    let d = state_derivative(&QuadState::default(), &RotorThrusts([0.0; 4]), &cfg);
    assert_eq!(&d[7..10], &[0.0, 0.0, -9.81]);

    let spin = state([0.0; 3], [1.0, 0.0, 0.0, 0.0], [0.0; 3], [0.0, 0.0, 1.0]);
    let d = state_derivative(&spin, &hover_thrusts(&cfg).unwrap(), &cfg);
    assert!(d[10..13].iter().all(|w| w.abs() < 1e-15));
}

#[test]
fn ballistic_step_is_exact() {
    let cfg = QuadConfig::standard();
    let next = rk4_step(&QuadState::default(), &RotorThrusts([0.0; 4]), 0.1, &cfg);
    // v(t) = -g t, p(t) = -g t^2 / 2
    assert_relative_eq!(next.velocity[2], -0.981, epsilon = 1e-12);
    assert_relative_eq!(next.position[2], -0.04905, epsilon = 1e-12);
}

#[test]
fn fourth_order_convergence() {
    let cfg = QuadConfig::standard();
    let x0 = state(
        [0.0; 3],
        quat_from_axis_angle([1.0, 2.0, 0.5], 0.4),
        [1.0, -0.5, 2.0],
        [2.0, -1.0, 0.7],
    );
    let u = RotorThrusts([3.0, 2.0, 2.6, 1.5]);
    let integrate = |h: f64, steps: usize| (0..steps).fold(x0, |x, _| rk4_step(&x, &u, h, &cfg));
    let reference = integrate(0.05 / 256.0, 256);
    let err = |x: QuadState| -> f64 {
        x.to_array()
            .iter()
            .zip(reference.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let e1 = err(integrate(0.05, 1));
    let e2 = err(integrate(0.025, 2));
    let ratio = e1 / e2;
    assert!(ratio > 12.0 && ratio < 20.0, "error ratio {ratio}");
}

#[test]
fn known_rotation() {
    let h = 0.5f64.sqrt();
    let r = rotate_vector(&[h, 0.0, 0.0, h], &[1.0, 0.0, 0.0]);
    assert_relative_eq!(r[0], 0.0, epsilon = 1e-15);
    assert_relative_eq!(r[1], 1.0, epsilon = 1e-15);
    let q = [0.3, -0.1, 0.9, 0.2];
    assert_eq!(quat_multiply(&[1.0, 0.0, 0.0, 0.0], &q), q);
}

fn unit_quat() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0..1.0f64)
        .prop_filter("non-degenerate", |q| q.iter().map(|c| c * c).sum::<f64>() > 1e-3)
        .prop_map(|q| {
            let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            q.map(|c| c / n)
        })
}

fn thrusts() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(0.0..8.0f64)
}

proptest! {
    #[test]
    fn rotation_matches_matrix_form(q in unit_quat(), v in prop::array::uniform3(-5.0..5.0f64)) {
        let a = rotate_vector(&q, &v);
        let b = matvec(rotation_matrix(q), v);
        for i in 0..3 {
            prop_assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn wrench_is_linear(u1 in thrusts(), u2 in thrusts(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let cfg = QuadConfig::standard();
        let mixed = RotorThrusts(std::array::from_fn(|i| a * u1[i] + b * u2[i]));
        let (f, t) = input_to_wrench(&mixed, &cfg);
        let (f1, t1) = input_to_wrench(&RotorThrusts(u1), &cfg);
        let (f2, t2) = input_to_wrench(&RotorThrusts(u2), &cfg);
        prop_assert!((f - (a * f1 + b * f2)).abs() < 1e-10);
        for i in 0..3 {
            prop_assert!((t[i] - (a * t1[i] + b * t2[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn step_keeps_unit_quaternion(q in unit_quat(), w in prop::array::uniform3(-10.0..10.0f64), u in thrusts(), dt in 0.001..0.1f64) {
        let cfg = QuadConfig::standard();
        let next = rk4_step(&state([0.0; 3], q, [0.0; 3], w), &RotorThrusts(u), dt, &cfg);
        let n = next.orientation.iter().map(|c| c * c).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn ballistic_energy_is_conserved(v in prop::array::uniform3(-10.0..10.0f64), z in -5.0..5.0f64) {
        let cfg = QuadConfig::standard();
        let energy = |x: &QuadState| 0.5 * x.velocity.iter().map(|c| c * c).sum::<f64>() + GRAVITY * x.position[2];
        let x0 = state([0.0, 0.0, z], [1.0, 0.0, 0.0, 0.0], v, [0.0; 3]);
        let x1 = (0..20).fold(x0, |x, _| rk4_step(&x, &RotorThrusts([0.0; 4]), 0.05, &cfg));
        prop_assert!((energy(&x1) - energy(&x0)).abs() < 1e-9);
    }

    #[test]
    fn drag_vanishes_at_rest(q in unit_quat(), w in prop::array::uniform3(-5.0..5.0f64), u in thrusts()) {
        let with = QuadConfig::rq();
        let mut without = with.clone();
        without.v_max = None;
        let x = state([1.0, 2.0, 3.0], q, [0.0; 3], w);
        let u = RotorThrusts(u);
        prop_assert_eq!(state_derivative(&x, &u, &with), state_derivative(&x, &u, &without));
    }
}
