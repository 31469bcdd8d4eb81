use atelier_core::engine::{LoopConfig, ToySpace};
use atelier_core::rng::seeded;
use rand::Rng;

/// A toy space described by plain probabilities, for the enumeration oracle.
pub struct Toy {
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub initial: Vec<bool>,
    /// `q[s][a][s']`
    pub q: Vec<Vec<Vec<f64>>>,
    pub horizon: usize,
}

impl Toy {
    pub fn random(states: usize, actions: usize, horizon: usize, seed: u64) -> Toy {
        let mut rng = seeded(seed);
        let mut feats = |n: usize, d: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
        };
        let phi = feats(states, 3);
        let psi = feats(actions, 2);
        let mut initial: Vec<bool> = (0..states).map(|_| rng.random_bool(0.7)).collect();
        initial[0] = true;
        let q = (0..states)
            .map(|_| {
                (0..actions)
                    .map(|_| {
                        let mut row: Vec<f64> =
                            (0..states).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.1..1.0) }).collect();
                        row[rng.random_range(0..states)] += 0.5;
                        let z: f64 = row.iter().sum();
                        row.iter().map(|p| p / z).collect()
                    })
                    .collect()
            })
            .collect();
        Toy { phi, psi, initial, q, horizon }
    }

    pub fn space(&self) -> ToySpace {
        let log_q = self.q.iter().flatten().flatten().map(|p| p.ln()).collect();
        ToySpace::new(self.phi.clone(), self.psi.clone(), self.initial.clone(), log_q, self.horizon).unwrap()
    }

    pub fn all_sequences(&self) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..=self.horizon {
            out = out
                .into_iter()
                .flat_map(|p| (0..self.phi.len()).map(move |s| [p.clone(), vec![s]].concat()))
                .collect();
        }
        out
    }

    pub fn prob(&self, states: &[usize], actions: &[usize]) -> f64 {
        let starts = self.initial.iter().filter(|&&i| i).count() as f64;
        let mut p = if self.initial[states[0]] { 1.0 / starts } else { 0.0 };
        for t in 0..self.horizon {
            p *= self.q[states[t]][actions[t]][states[t + 1]];
        }
        p
    }

    /// `Σ_t γ_t (φ(s_t), ψ(a_t), 1)`: the reward is linear in these.
    pub fn features(&self, states: &[usize], actions: &[usize], cfg: &LoopConfig) -> Vec<f64> {
        let mut f = vec![0.0; self.phi[0].len() + self.psi[0].len() + 1];
        for t in 0..self.horizon {
            let g = cfg.discount0 * cfg.discount_decay.powi(t as i32);
            let row: Vec<f64> = [self.phi[states[t]].clone(), self.psi[actions[t]].clone(), vec![1.0]].concat();
            for (fi, r) in f.iter_mut().zip(row) {
                *fi += g * r;
            }
        }
        f
    }

    /// Log-likelihood and its gradient by summing over every state sequence.
    pub fn brute(&self, states: &[usize], actions: &[usize], theta: &[f64], cfg: &LoopConfig) -> (f64, Vec<f64>) {
        let score = |s: &[usize]| -> f64 { self.features(s, actions, cfg).iter().zip(theta).map(|(f, w)| f * w).sum() };
        let mut z = 0.0;
        let mut expected = vec![0.0; theta.len()];
        for seq in self.all_sequences() {
            let w = self.prob(&seq, actions) * score(&seq).exp();
            z += w;
            for (e, f) in expected.iter_mut().zip(self.features(&seq, actions, cfg)) {
                *e += w * f;
            }
        }
        let value = self.prob(states, actions).ln() + score(states) - z.ln();
        let grad = self.features(states, actions, cfg).iter().zip(&expected).map(|(f, e)| f - e / z).collect();
        (value, grad)
    }

    pub fn legal_record(&self, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut rng = seeded(seed);
        let actions: Vec<usize> = (0..self.horizon).map(|_| rng.random_range(0..self.psi.len())).collect();
        let legal: Vec<Vec<usize>> =
            self.all_sequences().into_iter().filter(|s| self.prob(s, &actions) > 0.0).collect();
        (legal[rng.random_range(0..legal.len())].clone(), actions)
    }
}
