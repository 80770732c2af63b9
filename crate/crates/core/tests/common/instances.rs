use jointsparse::model::{
    block_dict, delta_estimate, gamma_of, normalize_pair, synthesize, DictionaryPair, GroundTruth, Matrix, RipMode,
    SignalPair,
};
use jointsparse::rng::{self, Purpose};
use jointsparse::theory::BoundInputs;
use rand_distr::{Distribution, StandardNormal};

/// Planted noiseless 2-sparse 6×8 instance whose normalized coefficients stay
/// below 0.9, so the unit magnitude bound holds for the planted point.
pub fn tiny_instance(seed: u64) -> (DictionaryPair, SignalPair) {
    for attempt in 0..1000 {
        let s = seed * 1000 + attempt;
        let d = DictionaryPair::gaussian(6, 6, 8, s);
        let (pair, gt) = synthesize(&d, 2, 0.25, f64::INFINITY, s).unwrap();
        let (pair, si, sd) = normalize_pair(&pair).unwrap();
        if gt.a0.amax() / si < 0.9 && gt.b0.amax() / sd < 0.9 {
            return (d, pair);
        }
    }
    unreachable!()
}

pub fn orthonormal_pair(n: usize, seed: u64) -> DictionaryPair {
    let mut r = rng::stream(seed, Purpose::Dictionary, 7);
    let mut q = || Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut r)).qr().q();
    let qi = q();
    let qd = q();
    DictionaryPair::new(qi, qd).unwrap()
}

/// A normalized instance meeting the bound's hypotheses: noise inside the
/// `eta` balls, coefficients bounded by `f0 = 1`, and a positive denominator
/// for the worst-mode isometry estimate.
pub struct BoundInstance {
    pub dicts: DictionaryPair,
    pub pair: SignalPair,
    pub truth: GroundTruth,
    pub inputs: BoundInputs,
}

pub fn bound_instance(seed: u64, n: usize, t0: usize, eta: f64) -> BoundInstance {
    for attempt in 0..1000 {
        let s = seed * 1000 + attempt;
        let dicts = orthonormal_pair(n, s);
        let (raw, gt) = synthesize(&dicts, t0, 0.25, 25.0, s).unwrap();
        let (pair, si, sd) = normalize_pair(&raw).unwrap();
        let truth = gt.rescaled(1.0 / si, 1.0 / sd);
        let ok = truth.noise_i.norm() <= eta
            && truth.noise_d.norm() <= eta
            && truth.a0.amax() <= 1.0
            && truth.b0.amax() <= 1.0;
        if !ok {
            continue;
        }
        let m = 2 * n - t0;
        let block = block_dict(&dicts);
        let delta_m = delta_estimate(&block, m, RipMode::Worst).unwrap().delta;
        let delta_m_t0 = delta_estimate(&block, m + t0, RipMode::Worst).unwrap().delta;
        let gamma = gamma_of(&truth.a0, &truth.b0, &truth.support).unwrap();
        let inputs = BoundInputs {
            eta,
            gamma,
            t0,
            m,
            delta_m,
            delta_m_t0,
            f0: 1.0,
        };
        if inputs.denominator() > 0.0 {
            return BoundInstance {
                dicts,
                pair,
                truth,
                inputs,
            };
        }
    }
    panic!("no instance meets the hypotheses for seed {seed}");
}
