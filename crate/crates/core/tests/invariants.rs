use nalgebra::{DVector, Vector3};
use proptest::prelude::*;

use ocflow::field::{EuclideanField, So3Field};
use ocflow::oc_euclidean::{run_guidance_euclidean, GuidanceConfig};
use ocflow::ode::{integrate_euclidean, integrate_so3, ControlSchedule, TimeGrid};
use ocflow::reward::RewardSpec;
use ocflow::so3::{exp_so3, geodesic_distance, hat, log_so3, rotation_angle, RotationMatrix};

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-r..r).prop_map(Vector3::from)
}

proptest! {
    #[test]
    fn log_inverts_exp_below_pi(w in vec3(1.7)) {
        prop_assume!(w.norm() < 3.0);
        let r = exp_so3(&hat(&w));
        prop_assert!(r.orthogonality_residual() < 1e-12);
        let back = log_so3(&r).unwrap().vector();
        prop_assert!((back - w).norm() < 1e-9);
        prop_assert!((rotation_angle(&r) - w.norm()).abs() < 1e-9);
    }

    #[test]
    fn distance_is_symmetric_and_left_invariant(a in vec3(1.0), b in vec3(1.0), g in vec3(1.5)) {
        let (ra, rb, rg) = (exp_so3(&hat(&a)), exp_so3(&hat(&b)), exp_so3(&hat(&g)));
        let d = geodesic_distance(&ra, &rb).unwrap();
        prop_assert!((d - geodesic_distance(&rb, &ra).unwrap()).abs() < 1e-9);
        prop_assert!((d - geodesic_distance(&(rg * ra), &(rg * rb)).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn geometric_euler_stays_on_the_group(
        body in vec3(2.0),
        controls in prop::collection::vec(vec3(3.0), 4),
        n_mult in 1usize..20,
    ) {
        let grid = TimeGrid::new(4 * n_mult).unwrap();
        let field = So3Field::ConstantBody(hat(&body));
        let schedule = ControlSchedule::new(controls.iter().map(hat).collect(), grid).unwrap();
        let traj = integrate_so3(&field, &schedule, &RotationMatrix::identity(), grid).unwrap();
        for x in &traj.states {
            prop_assert!(x.orthogonality_residual() < 1e-9);
        }
    }

    #[test]
    fn zero_field_displacement_is_dt_times_control_sum(
        controls in prop::collection::vec(-5.0f64..5.0, 1..6),
        n_mult in 1usize..10,
    ) {
        let m = controls.len();
        let grid = TimeGrid::new(m * n_mult).unwrap();
        let schedule = ControlSchedule::new(controls.iter().map(|c| DVector::from_element(1, *c)).collect(), grid).unwrap();
        let traj = integrate_euclidean(&EuclideanField::Zero { dim: 1 }, &schedule, &DVector::zeros(1), grid).unwrap();
        let expected = grid.dt() * controls.iter().sum::<f64>();
        prop_assert!((traj.terminal()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn lq_objective_never_drops(target in -3.0f64..3.0, alpha in 0.1f64..2.0, gamma in 1.0f64..8.0) {
        let reward = RewardSpec::QuadraticTarget { target: DVector::from_element(1, target) };
        let config = GuidanceConfig::from_gamma(gamma, alpha, 20, 5, 30);
        let report = run_guidance_euclidean(&EuclideanField::Zero { dim: 1 }, &DVector::zeros(1), &reward, &config).unwrap();
        let j: Vec<f64> = report.records.iter().map(|r| r.objective).collect();
        for w in j.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12, "{} -> {}", w[0], w[1]);
        }
    }
}
