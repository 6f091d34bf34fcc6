//! Value syntaxes shared by several commands: number lists, ranges and
//! `key=value` model specs.

use std::str::FromStr;

/// A nonempty list of numbers written as `a,b,c`, a single `a`, or an
/// inclusive range `start:stop:step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not a finite number: {s:?}"))
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let values = match parts.as_slice() {
            [start, stop, step] => {
                let (a, b, h) = (number(start)?, number(stop)?, number(step)?);
                if !(h > 0.0) {
                    return Err(format!("range step must be positive in {s:?}"));
                }
                if b < a {
                    return Err(format!("empty range {s:?}"));
                }
                let n = ((b - a) / h + 1e-9).floor() as usize;
                if n > 10_000_000 {
                    return Err(format!("range {s:?} has too many points"));
                }
                (0..=n).map(|i| a + i as f64 * h).collect()
            }
            [_] => s.split(',').map(number).collect::<Result<Vec<_>, _>>()?,
            _ => return Err(format!("expected a list a,b,c or a range start:stop:step, got {s:?}")),
        };
        if values.is_empty() {
            return Err(format!("empty grid {s:?}"));
        }
        Ok(Grid(values))
    }
}

impl Grid {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn increasing(&self) -> bool {
        self.0.windows(2).all(|w| w[1] > w[0])
    }
}

/// A number or the literal `kstar` (the critical momentum of the model).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Momentum {
    Value(f64),
    KStar,
}

impl FromStr for Momentum {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("kstar") {
            Ok(Momentum::KStar)
        } else {
            number(s).map(Momentum::Value)
        }
    }
}

/// `nu=2` (the only key of the degenerate 2D model).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub nu: u32,
}

impl FromStr for ModelSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut nu = None;
        for pair in s.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got {pair:?}"))?;
            match key.trim() {
                "nu" => {
                    let v: u32 = value.trim().parse().map_err(|_| format!("nu must be an integer, got {value:?}"))?;
                    if v < 2 {
                        return Err(format!("nu must be >= 2, got {v}"));
                    }
                    nu = Some(v);
                }
                other => return Err(format!("unknown model key {other:?} (expected nu)")),
            }
        }
        Ok(ModelSpec {
            nu: nu.ok_or("model spec needs nu=<integer>")?,
        })
    }
}
