//! Draw choice data from a known random-parameters logit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{ChoiceDataset, LogitSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedFeature {
    pub name: String,
    /// Feature values are drawn uniformly from `[low, high)`.
    pub low: f64,
    pub high: f64,
    pub mean: f64,
    /// Zero for a fixed coefficient.
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel {
    pub constant: f64,
    pub features: Vec<PlantedFeature>,
}

impl PlantedModel {
    /// One fixed clearance-like feature and one random interval-like feature.
    pub fn reference() -> Self {
        PlantedModel {
            constant: 1.1,
            features: vec![
                PlantedFeature { name: "gap".into(), low: 0.0, high: 60.0, mean: -0.025, sd: 0.0 },
                PlantedFeature { name: "delta_t".into(), low: 0.0, high: 9.0, mean: -0.12, sd: 0.18 },
            ],
        }
    }

    /// Spec estimating each feature as fixed or random as planted.
    pub fn spec(&self) -> LogitSpec {
        let fixed = self.features.iter().filter(|f| f.sd == 0.0).map(|f| f.name.clone());
        let random = self.features.iter().filter(|f| f.sd != 0.0).map(|f| f.name.clone());
        LogitSpec::new(fixed.collect::<Vec<_>>(), random.collect::<Vec<_>>())
    }

    /// Truth in the parameter order of [`PlantedModel::spec`].
    pub fn truth(&self) -> Vec<f64> {
        let mut out = vec![self.constant];
        out.extend(self.features.iter().filter(|f| f.sd == 0.0).map(|f| f.mean));
        out.extend(self.features.iter().filter(|f| f.sd != 0.0).map(|f| f.mean));
        out.extend(self.features.iter().filter(|f| f.sd != 0.0).map(|f| f.sd));
        out
    }

    pub fn simulate(&self, n: usize, seed: u64) -> ChoiceDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Normal::new(0.0, 1.0).expect("unit normal");
        let mut y = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        for _ in 0..n {
            let mut v = self.constant;
            let mut row = Vec::with_capacity(self.features.len());
            for f in &self.features {
                let xi = Uniform::new(f.low, f.high).expect("feature range").sample(&mut rng);
                let beta = f.mean + f.sd * z.sample(&mut rng);
                v += beta * xi;
                row.push(xi);
            }
            let p = super::sigma(v);
            y.push(u8::from(rng.random::<f64>() < p));
            x.push(row);
        }
        let names = self.features.iter().map(|f| f.name.clone()).collect();
        ChoiceDataset { names, y, x }
    }
}
