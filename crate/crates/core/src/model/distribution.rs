use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Normal draws are truncated at this many standard deviations.
const NORMAL_TRUNCATION: f64 = 4.0;

/// Distribution of school compatibility `s` across schools.
///
/// Textual form (config files, CLI): `point(c)`, `uniform(a, b)`,
/// `normal(mean, sd)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionSpec {
    PointMass {
        value: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// Normal truncated to `mean ± 4·sd`.
    Normal {
        mean: f64,
        sd: f64,
    },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistributionSpec::PointMass { value } => value.is_finite(),
            DistributionSpec::Uniform { low, high } => {
                low.is_finite() && high.is_finite() && low <= high
            }
            DistributionSpec::Normal { mean, sd } => {
                mean.is_finite() && sd.is_finite() && sd >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("invalid distribution parameters: {self}")))
        }
    }

    /// Draws one value. Uniform and normal draws are affine in a single
    /// standardized variate, so families sharing a seed are coupled: scaling
    /// the spread scales every draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistributionSpec::PointMass { value } => value,
            DistributionSpec::Uniform { low, high } => {
                let u: f64 = rng.random();
                low + (high - low) * u
            }
            DistributionSpec::Normal { mean, sd } => loop {
                let z: f64 = rng.sample(StandardNormal);
                if z.abs() <= NORMAL_TRUNCATION {
                    break mean + sd * z;
                }
            },
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistributionSpec::PointMass { value } => value,
            DistributionSpec::Uniform { low, high } => 0.5 * (low + high),
            DistributionSpec::Normal { mean, .. } => mean,
        }
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistributionSpec::PointMass { value } => write!(f, "point({value})"),
            DistributionSpec::Uniform { low, high } => write!(f, "uniform({low}, {high})"),
            DistributionSpec::Normal { mean, sd } => write!(f, "normal({mean}, {sd})"),
        }
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let (family, rest) = text.split_once('(').ok_or_else(|| {
            domain(format!(
                "cannot parse distribution `{text}`; expected e.g. uniform(-1, 1)"
            ))
        })?;
        let args = rest.strip_suffix(')').ok_or_else(|| {
            domain(format!(
                "distribution `{text}` is missing a closing parenthesis"
            ))
        })?;
        let params = args
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| domain(format!("bad parameter `{}` in `{text}`", p.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        let arity = |n: usize| {
            if params.len() == n {
                Ok(())
            } else {
                Err(domain(format!(
                    "`{family}` takes {n} parameter(s), got {}",
                    params.len()
                )))
            }
        };
        let spec = match family.trim().to_ascii_lowercase().as_str() {
            "point" | "point_mass" | "pointmass" => {
                arity(1)?;
                DistributionSpec::PointMass { value: params[0] }
            }
            "uniform" => {
                arity(2)?;
                DistributionSpec::Uniform {
                    low: params[0],
                    high: params[1],
                }
            }
            "normal" => {
                arity(2)?;
                DistributionSpec::Normal {
                    mean: params[0],
                    sd: params[1],
                }
            }
            other => {
                return Err(domain(format!(
                    "unsupported distribution family `{other}`; supported: point, uniform, normal"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn parses_and_displays() {
        for text in ["point(0.5)", "uniform(-1, 1)", "normal(0, 2.5)"] {
            let spec: DistributionSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
        assert_eq!(
            " Uniform( -0.5 ,0.5 ) "
                .parse::<DistributionSpec>()
                .unwrap(),
            DistributionSpec::Uniform {
                low: -0.5,
                high: 0.5
            }
        );
    }

    #[test]
    fn rejects_unknown_family_and_bad_params() {
        let err = "cauchy(0, 1)".parse::<DistributionSpec>().unwrap_err();
        assert!(err.to_string().contains("unsupported distribution family"));
        assert!("uniform(1, -1)".parse::<DistributionSpec>().is_err());
        assert!("normal(0, -1)".parse::<DistributionSpec>().is_err());
        assert!("uniform(0)".parse::<DistributionSpec>().is_err());
        assert!("uniform 0 1".parse::<DistributionSpec>().is_err());
    }

    #[test]
    fn draws_respect_support() {
        let mut rng = substream(1, 0);
        let uniform = DistributionSpec::Uniform {
            low: -1.0,
            high: 3.0,
        };
        let normal = DistributionSpec::Normal { mean: 2.0, sd: 0.5 };
        for _ in 0..10_000 {
            let u = uniform.sample(&mut rng);
            assert!((-1.0..=3.0).contains(&u));
            let z = normal.sample(&mut rng);
            assert!((0.0..=4.0).contains(&z));
        }
        assert_eq!(
            DistributionSpec::PointMass { value: 0.3 }.sample(&mut rng),
            0.3
        );
    }
}
