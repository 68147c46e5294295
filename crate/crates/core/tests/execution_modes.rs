//! Switching between the thread pool and the sequential path must not change
//! a single bit of any Monte Carlo result. One test per binary: the mode is
//! process-wide.

use riskvex::control::{estimate_log_exp_cost, estimate_policy_gradient, ControlRiskModel, GradientMethod};
use riskvex::objective::{log_exp_objective, mean_grad_estimate, RiskModel, ScalarField};
use riskvex::parallel::{set_execution, Execution};
use riskvex::sampler::Streams;
use riskvex::synthesis::LinearSystem;
use riskvex::{Matrix, Vector};

#[derive(Debug, PartialEq)]
struct Snapshot {
    objective: (u64, u64),
    gradient: Vec<u64>,
    cost: (u64, u64),
    policy_gradient: Vec<u64>,
}

fn bits(v: &Vector) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn snapshot() -> Snapshot {
    let model = RiskModel::isotropic(1.0, 0.5, 4.0, 3).unwrap();
    let f = ScalarField::new(3, 1.0, |x: &Vector| x.iter().map(|v| v.sin()).sum::<f64>() / 3.0)
        .with_gradient(|x: &Vector| x.map(|v| v.cos() / 3.0));
    let theta = Vector::from_vec(vec![0.2, -0.1, 0.4]);
    // sample counts straddle block boundaries on purpose
    let obj = log_exp_objective(&f, &model, &theta, 20_001, &mut model.sampler(5).unwrap()).unwrap();
    let grad = mean_grad_estimate(&f, &model, &theta, 9_999, &mut model.sampler(6).unwrap()).unwrap();

    let sys = LinearSystem::new(
        vec![Matrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]); 3],
        vec![Matrix::from_row_slice(2, 1, &[0.0, 0.1]); 3],
        vec![Matrix::identity(2, 2) * 0.1; 4],
        vec![Matrix::identity(1, 1); 3],
    )
    .unwrap();
    let risk = ControlRiskModel::isotropic(1.0, 1.0, &[1; 3]).unwrap();
    let problem = sys.control_problem(&risk).unwrap();
    let policy = sys.policy(&vec![Matrix::from_row_slice(1, 2, &[-0.1, -0.2]); 3]);
    let cost = estimate_log_exp_cost(&problem, &policy, 10_000, &mut Streams::new(7)).unwrap();
    let pg = estimate_policy_gradient(&problem, &policy, GradientMethod::DerivativeFree, 5_000, &mut Streams::new(8)).unwrap();
    Snapshot {
        objective: (obj.value.to_bits(), obj.std_err.to_bits()),
        gradient: bits(&grad.mean),
        cost: (cost.value.to_bits(), cost.std_err.to_bits()),
        policy_gradient: bits(&pg.stacked_mean()),
    }
}

#[test]
fn parallel_and_sequential_results_are_bit_identical() {
    set_execution(Execution::Parallel);
    let parallel = snapshot();
    set_execution(Execution::Sequential);
    let sequential = snapshot();
    set_execution(Execution::Parallel);
    assert_eq!(parallel, sequential);
    assert_eq!(parallel, snapshot());
}
