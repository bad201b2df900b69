use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::BlockError;

/// Composition of the residual branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Arch {
    /// `W2·PReLU(W1·x + b1) + b2`
    #[default]
    TwoFc,
    /// `W2·x + b2` with a square `W2`.
    OneFc,
}

impl Arch {
    pub const ALL: [Arch; 2] = [Arch::TwoFc, Arch::OneFc];

    pub fn name(self) -> &'static str {
        match self {
            Arch::TwoFc => "two-fc",
            Arch::OneFc => "one-fc",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Arch::TwoFc => 0,
            Arch::OneFc => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Arch::TwoFc),
            1 => Some(Arch::OneFc),
            _ => None,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "two-fc" | "twofc" => Ok(Arch::TwoFc),
            "one-fc" | "onefc" => Ok(Arch::OneFc),
            other => Err(format!("unknown architecture `{other}`")),
        }
    }
}

pub const DEFAULT_PRELU_SLOPE: f64 = 0.25;

/// Weights of the residual branch. Matrices are row-major.
///
/// For [`Arch::OneFc`] the hidden width is zero, `w1`/`b1` are empty and
/// `w2` is `dim × dim`. The PReLU slope is kept but unused.
#[derive(Debug, Clone, PartialEq)]
pub struct DreamParams {
    pub arch: Arch,
    pub dim: usize,
    pub hidden: usize,
    /// `hidden × dim`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub prelu_slope: f64,
    /// `dim × hidden` (`dim × dim` for one fc)
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl DreamParams {
    pub fn zeros(arch: Arch, dim: usize, hidden: usize) -> Self {
        let hidden = match arch {
            Arch::TwoFc => hidden,
            Arch::OneFc => 0,
        };
        let last_in = if arch == Arch::TwoFc { hidden } else { dim };
        Self {
            arch,
            dim,
            hidden,
            w1: vec![0.0; hidden * dim],
            b1: vec![0.0; hidden],
            prelu_slope: DEFAULT_PRELU_SLOPE,
            w2: vec![0.0; dim * last_in],
            b2: vec![0.0; dim],
        }
    }

    /// Fan-in scaled uniform init (`±sqrt(6 / fan_in)`), zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Arch, dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch, dim, hidden);
        let bound1 = (6.0 / dim as f64).sqrt();
        for w in &mut p.w1 {
            *w = rng.random_range(-bound1..bound1);
        }
        let bound2 = (6.0 / p.last_layer_inputs() as f64).sqrt();
        for w in &mut p.w2 {
            *w = rng.random_range(-bound2..bound2);
        }
        p
    }

    /// Width of the activation vector entering `w2`; dropout masks have this length.
    pub fn last_layer_inputs(&self) -> usize {
        match self.arch {
            Arch::TwoFc => self.hidden,
            Arch::OneFc => self.dim,
        }
    }

    pub fn validate(&self) -> Result<(), BlockError> {
        let last_in = self.last_layer_inputs();
        let expect = [
            ("w1", self.w1.len(), self.hidden * self.dim),
            ("b1", self.b1.len(), self.hidden),
            ("w2", self.w2.len(), self.dim * last_in),
            ("b2", self.b2.len(), self.dim),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(BlockError::ShapeMismatch(format!(
                    "{name} has {got} entries, expected {want}"
                )));
            }
        }
        if self.arch == Arch::OneFc && self.hidden != 0 {
            return Err(BlockError::ShapeMismatch("one-fc block with nonzero hidden width".into()));
        }
        if !self.is_finite() {
            return Err(BlockError::NonFiniteParams);
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.prelu_slope.is_finite()
            && [&self.w1, &self.b1, &self.w2, &self.b2]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + 1 + self.w2.len() + self.b2.len()
    }

    /// Zeroed copy with the same shape.
    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(self.arch, self.dim, self.hidden);
        z.prelu_slope = 0.0;
        z
    }

    /// All parameters flattened as `w1, b1, slope, w2, b2`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.push(self.prelu_slope);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
        out
    }

    /// Inverse of [`DreamParams::to_flat`] for a block of the same shape.
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let (w1, rest) = flat.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (slope, rest) = rest.split_at(1);
        let (w2, b2) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.prelu_slope = slope[0];
        self.w2.copy_from_slice(w2);
        self.b2.copy_from_slice(b2);
    }

    /// Mutable views of every parameter group, slope included.
    pub(crate) fn groups_mut(&mut self) -> [&mut [f64]; 5] {
        [
            &mut self.w1,
            &mut self.b1,
            std::slice::from_mut(&mut self.prelu_slope),
            &mut self.w2,
            &mut self.b2,
        ]
    }

    pub(crate) fn groups(&self) -> [&[f64]; 5] {
        [
            &self.w1,
            &self.b1,
            std::slice::from_ref(&self.prelu_slope),
            &self.w2,
            &self.b2,
        ]
    }

    /// Frobenius norm over all groups.
    pub fn norm(&self) -> f64 {
        self.groups()
            .iter()
            .flat_map(|g| g.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes() {
        let p = DreamParams::zeros(Arch::TwoFc, 4, 3);
        assert_eq!((p.w1.len(), p.b1.len(), p.w2.len(), p.b2.len()), (12, 3, 12, 4));
        p.validate().unwrap();
        let q = DreamParams::zeros(Arch::OneFc, 4, 3);
        assert_eq!((q.hidden, q.w1.len(), q.w2.len()), (0, 0, 16));
        q.validate().unwrap();
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = DreamParams::init(Arch::TwoFc, 5, 3, &mut rng);
        let mut q = p.zeros_like();
        q.set_flat(&p.to_flat());
        assert_eq!(p, q);
    }

    #[test]
    fn init_bounds_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = DreamParams::init(Arch::TwoFc, 24, 6, &mut rng);
        let b1 = (6.0f64 / 24.0).sqrt();
        let b2 = (6.0f64 / 6.0).sqrt();
        assert!(p.w1.iter().all(|w| w.abs() < b1));
        assert!(p.w2.iter().all(|w| w.abs() < b2));
        assert!(p.b1.iter().chain(&p.b2).all(|b| *b == 0.0));
        assert_eq!(p.prelu_slope, DEFAULT_PRELU_SLOPE);
    }

    #[test]
    fn validate_catches_bad_shapes() {
        let mut p = DreamParams::zeros(Arch::TwoFc, 4, 4);
        p.b2.pop();
        assert!(matches!(p.validate(), Err(BlockError::ShapeMismatch(_))));
        let mut p = DreamParams::zeros(Arch::TwoFc, 4, 4);
        p.w1[0] = f64::INFINITY;
        assert!(matches!(p.validate(), Err(BlockError::NonFiniteParams)));
    }

    #[test]
    fn arch_names() {
        for a in Arch::ALL {
            assert_eq!(a.name().parse::<Arch>().unwrap(), a);
            assert_eq!(Arch::from_code(a.code()), Some(a));
        }
    }
}
