use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{Cutoff, IntegralForm};
use crate::lattice::{enumerate_shell, EnumerationOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SequenceKind {
    Lacunary { ratio: f64 },
    /// `lambda_k = mu_k!`.
    FactorialSparse { mus: Vec<u64> },
    Explicit,
}

/// Strictly increasing radii `lambda_1 < lambda_2 < ...`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiiSequence {
    pub kind: SequenceKind,
    pub values: Vec<u128>,
}

impl RadiiSequence {
    /// `lambda_1 = start`, `lambda_{k+1} = ceil(c lambda_k)`.
    pub fn lacunary(ratio: f64, start: u64, count: usize) -> Result<Self> {
        if !(ratio > 1.0) || start == 0 || count == 0 {
            return Err(Error::InvalidArgument("lacunary needs c > 1, start >= 1, count >= 1".into()));
        }
        let mut values = vec![start as u128];
        while values.len() < count {
            let next = (ratio * *values.last().unwrap() as f64).ceil();
            if !next.is_finite() || next >= u128::MAX as f64 {
                return Err(Error::InvalidArgument("lacunary sequence overflows".into()));
            }
            values.push(next as u128);
        }
        Ok(RadiiSequence {
            kind: SequenceKind::Lacunary { ratio },
            values,
        })
    }

    /// `lambda_k = mu_k!` for strictly increasing `mu_k`.
    pub fn factorial(mus: Vec<u64>) -> Result<Self> {
        if mus.is_empty() {
            return Err(Error::InvalidArgument("empty mu list".into()));
        }
        if mus.windows(2).any(|w| w[1] <= w[0]) || mus[0] == 0 {
            return Err(Error::InvalidArgument(format!("mu_k must be positive and strictly increasing: {mus:?}")));
        }
        let values = mus
            .iter()
            .map(|&m| {
                (1..=m as u128)
                    .try_fold(1u128, |acc, k| acc.checked_mul(k))
                    .ok_or_else(|| Error::InvalidArgument(format!("{m}! overflows 128 bits")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RadiiSequence {
            kind: SequenceKind::FactorialSparse { mus },
            values,
        })
    }

    /// `mu_k = 2^k`, k = 1..=count.
    pub fn factorial_powers_of_two(count: usize) -> Result<Self> {
        Self::factorial((1..=count as u32).map(|k| 1u64 << k).collect())
    }

    pub fn explicit(values: Vec<u64>) -> Result<Self> {
        if values.is_empty() || values[0] == 0 || values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "explicit radii must be positive and strictly increasing: {values:?}"
            )));
        }
        Ok(RadiiSequence {
            kind: SequenceKind::Explicit,
            values: values.into_iter().map(|v| v as u128).collect(),
        })
    }

    /// `factorial:2,3,4`, `pow2:COUNT`, `lacunary:RATIO,START,COUNT` or
    /// `list:1,2,5`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad sequence {spec:?}; expected factorial:, pow2:, lacunary: or list:"));
        let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
        let ints = || -> Result<Vec<u64>> { rest.split(',').map(|t| t.trim().parse::<u64>().map_err(|_| bad())).collect() };
        match kind {
            "factorial" => Self::factorial(ints()?),
            "pow2" => Self::factorial_powers_of_two(rest.trim().parse().map_err(|_| bad())?),
            "list" => Self::explicit(ints()?),
            "lacunary" => {
                let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(bad());
                }
                let ratio: f64 = parts[0].parse().map_err(|_| bad())?;
                let start: u64 = parts[1].parse().map_err(|_| bad())?;
                let count: usize = parts[2].parse().map_err(|_| bad())?;
                Self::lacunary(ratio, start, count)
            }
            _ => Err(bad()),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_u64(&self) -> Result<Vec<u64>> {
        self.values
            .iter()
            .map(|&v| u64::try_from(v).map_err(|_| Error::InvalidArgument(format!("radius {v} exceeds 64 bits"))))
            .collect()
    }

    /// For factorial sequences: `log mu_k / log k` nondecreasing along the
    /// stored prefix from k = 3 on. A limit cannot be checked on a prefix.
    ///
    /// The ratio starts at k = 3 because `k c / log k`, the profile of
    /// `mu_k = 2^k`, only increases once `log k > 1`.
    pub fn prefix_consistent(&self) -> Option<bool> {
        match &self.kind {
            SequenceKind::FactorialSparse { mus } => {
                let ratios: Vec<f64> = mus
                    .iter()
                    .enumerate()
                    .skip(2)
                    .map(|(i, &m)| (m as f64).ln() / ((i + 1) as f64).ln())
                    .collect();
                Some(ratios.windows(2).all(|w| w[1] >= w[0]))
            }
            _ => None,
        }
    }

    pub fn min_ratio(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[1] as f64 / w[0] as f64)
            .fold(f64::INFINITY, f64::min)
    }

    /// Shell sizes per radius; zero marks a value that is not represented.
    pub fn representation_counts(
        &self,
        form: &IntegralForm,
        phi: &Cutoff,
        opts: &EnumerationOptions,
    ) -> Result<Vec<usize>> {
        self.as_u64()?
            .into_iter()
            .map(|l| enumerate_shell(form, phi, l, opts).map(|s| s.len()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_specs() {
        assert_eq!(RadiiSequence::parse("factorial:2,3,4").unwrap().values, vec![2, 6, 24]);
        assert_eq!(RadiiSequence::parse("pow2:2").unwrap().values, vec![2, 24]);
        assert_eq!(RadiiSequence::parse("list:1,5").unwrap().values, vec![1, 5]);
        assert_eq!(RadiiSequence::parse("lacunary:2,3,3").unwrap().values, vec![3, 6, 12]);
        assert!(RadiiSequence::parse("nope:1").is_err());
        assert!(RadiiSequence::parse("list:3,1").is_err());
    }

    #[test]
    fn factorial_example() {
        let s = RadiiSequence::factorial_powers_of_two(4).unwrap();
        assert_eq!(s.values, vec![2, 24, 40320, 20922789888000]);
        assert_eq!(s.prefix_consistent(), Some(true));
        assert!(RadiiSequence::factorial(vec![3, 3]).is_err());
        assert!(RadiiSequence::factorial(vec![40]).is_err());
        // mu_k = k + 1 grows too slowly
        let slow = RadiiSequence::factorial(vec![2, 3, 4, 5]).unwrap();
        assert_eq!(slow.prefix_consistent(), Some(false));
        let bumpy = RadiiSequence::factorial(vec![2, 9, 10, 11]).unwrap();
        assert_eq!(bumpy.prefix_consistent(), Some(false));
    }

    #[test]
    fn lacunary_example() {
        let s = RadiiSequence::lacunary(2.0, 1, 5).unwrap();
        assert_eq!(s.values, vec![1, 2, 4, 8, 16]);
        assert!(s.min_ratio() >= 2.0);
        let t = RadiiSequence::lacunary(1.5, 3, 6).unwrap();
        assert!(t.min_ratio() >= 1.5);
    }

    #[test]
    fn explicit_represented() {
        let s = RadiiSequence::explicit(vec![5, 13, 25]).unwrap();
        let counts = s
            .representation_counts(&IntegralForm::sphere(5), &Cutoff::ConstantOne, &EnumerationOptions::default())
            .unwrap();
        assert!(counts.iter().all(|&c| c > 0));
        assert!(RadiiSequence::explicit(vec![5, 5]).is_err());
    }
}
