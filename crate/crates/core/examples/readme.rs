use pram_core::estfun::build_estimating_function;
use pram_core::estimators::proposed_estimate;
use pram_core::math::expit;
use pram_core::rng::{stream_rng, uniform01};
use pram_core::{Dataset, EstimandSpec, Error, SolverConfig, TransitionMatrix};

fn main() -> Result<(), Error> {
    let n = 400;
    let mut rng = stream_rng(9, 1);
    let xs: Vec<f64> = (0..n).map(|_| -1.5 + 3.0 * uniform01(&mut rng)).collect();
    let released: Vec<usize> = xs
        .iter()
        .map(|&x| {
            let y = usize::from(uniform01(&mut rng) < expit(-0.4 + 1.1 * x));
            let keep = if y == 0 { 0.9 } else { 0.85 };
            if uniform01(&mut rng) < keep {
                y
            } else {
                1 - y
            }
        })
        .collect();

    let p = TransitionMatrix::from_rows(&[vec![0.9, 0.15], vec![0.1, 0.85]])?;
    let mut data = Dataset::new(2)?;
    data.push_column("x", xs)?;
    data.set_perturbed_levels(released)?;
    let spec = EstimandSpec::logistic_response("y", &["x"], 2);
    let eqs = build_estimating_function(&spec, &data)?;
    let fit = proposed_estimate(&data, &p, eqs.as_ref(), &SolverConfig::default())?;
    assert!(fit.diagnostics().converged);
    println!("beta_hat: {:?}", fit.beta());
    Ok(())
}
