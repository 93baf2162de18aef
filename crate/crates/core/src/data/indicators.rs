use super::DataError;

/// `ln(close_t / close_{t-1})`, one shorter than the input.
pub fn log_returns(close: &[f64]) -> Result<Vec<f64>, DataError> {
    if close.len() < 2 {
        return Err(DataError::TooShort {
            required: 2,
            actual: close.len(),
        });
    }
    if let Some((index, &value)) = close.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(DataError::NonPositivePrice { index, value });
    }
    Ok(close.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Wilder-smoothed relative strength index. The first `period` entries are
/// `None`.
///
/// When both smoothed averages are zero the index is 50; when only the
/// average loss is zero it is 100.
pub fn rsi(close: &[f64], period: usize) -> Vec<Option<f64>> {
    assert!(period >= 1, "contract violation: rsi period must be >= 1");
    assert!(
        close.len() > period,
        "contract violation: rsi needs more than {period} values, got {}",
        close.len()
    );
    let mut out = vec![None; close.len()];
    let p = period as f64;
    let (mut gain, mut loss) = (0.0, 0.0);
    for w in close[..=period].windows(2) {
        let d = w[1] - w[0];
        gain += d.max(0.0);
        loss += (-d).max(0.0);
    }
    gain /= p;
    loss /= p;
    out[period] = Some(rsi_value(gain, loss));
    for t in period + 1..close.len() {
        let d = close[t] - close[t - 1];
        gain = (gain * (p - 1.0) + d.max(0.0)) / p;
        loss = (loss * (p - 1.0) + (-d).max(0.0)) / p;
        out[t] = Some(rsi_value(gain, loss));
    }
    out
}

fn rsi_value(gain: f64, loss: f64) -> f64 {
    if loss == 0.0 {
        if gain == 0.0 {
            50.0
        } else {
            100.0
        }
    } else {
        100.0 - 100.0 / (1.0 + gain / loss)
    }
}

/// Exponential moving average with `alpha = 2 / (span + 1)`, seeded with the
/// first observation.
pub fn ema(series: &[f64], span: usize) -> Vec<f64> {
    assert!(span >= 1, "contract violation: ema span must be >= 1");
    let alpha = 2.0 / (span as f64 + 1.0);
    let mut out = Vec::with_capacity(series.len());
    let mut acc = match series.first() {
        Some(&v) => v,
        None => return out,
    };
    for &x in series {
        acc = alpha * x + (1.0 - alpha) * acc;
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Macd {
    pub macd: Vec<f64>,
    pub signal: Vec<f64>,
    pub histogram: Vec<f64>,
}

pub fn macd(close: &[f64], fast: usize, slow: usize, signal: usize) -> Macd {
    assert!(
        fast < slow,
        "contract violation: macd fast span {fast} must be below slow span {slow}"
    );
    assert!(
        close.len() > slow,
        "contract violation: macd needs more than {slow} values, got {}",
        close.len()
    );
    let f = ema(close, fast);
    let s = ema(close, slow);
    let line: Vec<f64> = f.iter().zip(&s).map(|(a, b)| a - b).collect();
    let sig = ema(&line, signal);
    let histogram = line.iter().zip(&sig).map(|(m, s)| m - s).collect();
    Macd {
        macd: line,
        signal: sig,
        histogram,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bollinger {
    pub middle: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    pub lower: Vec<Option<f64>>,
}

/// Rolling mean plus or minus `k` rolling population standard deviations.
/// The first `period - 1` entries are `None`.
pub fn bollinger(close: &[f64], period: usize, k: f64) -> Bollinger {
    assert!(period >= 2, "contract violation: bollinger period must be >= 2");
    assert!(
        close.len() >= period,
        "contract violation: bollinger needs at least {period} values, got {}",
        close.len()
    );
    let n = close.len();
    let mut out = Bollinger {
        middle: vec![None; n],
        upper: vec![None; n],
        lower: vec![None; n],
    };
    let p = period as f64;
    for t in period - 1..n {
        let w = &close[t + 1 - period..=t];
        let mean = w.iter().sum::<f64>() / p;
        let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / p;
        let sd = var.sqrt();
        out.middle[t] = Some(mean);
        out.upper[t] = Some(mean + k * sd);
        out.lower[t] = Some(mean - k * sd);
    }
    out
}

/// Replaces each gap with the most recent earlier value.
pub fn forward_fill(sparse: &[Option<f64>]) -> Result<Vec<f64>, DataError> {
    let mut last = None;
    sparse
        .iter()
        .map(|v| {
            if let Some(v) = v {
                last = Some(*v);
            }
            last.ok_or(DataError::LeadingGap)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_return_examples() {
        assert_eq!(log_returns(&[3.0, 3.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(log_returns(&[1.0, std::f64::consts::E]).unwrap(), vec![1.0]);
        let r = log_returns(&[2.16, 2.23]).unwrap()[0];
        assert!((r - 0.03189).abs() < 1e-5, "{r}");
        assert!(matches!(
            log_returns(&[1.0, 0.0]),
            Err(DataError::NonPositivePrice { index: 1, .. })
        ));
    }

    #[test]
    fn rsi_monotone_series() {
        let up: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let down: Vec<f64> = up.iter().rev().copied().collect();
        let r = rsi(&up, 14);
        assert!(r[..14].iter().all(Option::is_none));
        assert!(r[14..].iter().all(|v| *v == Some(100.0)));
        assert!(rsi(&down, 14)[14..].iter().all(|v| *v == Some(0.0)));
    }

    #[test]
    fn rsi_alternating_first_defined_point_is_fifty() {
        let s: Vec<f64> = (0..40).map(|i| (i % 2) as f64).collect();
        for period in [2, 4, 14] {
            assert_eq!(rsi(&s, period)[period], Some(50.0));
        }
    }

    #[test]
    #[should_panic(expected = "contract violation")]
    fn rsi_zero_period_panics() {
        rsi(&[1.0, 2.0], 0);
    }

    #[test]
    fn macd_constant_is_zero() {
        let m = macd(&[5.0; 40], 12, 26, 9);
        assert!(m.macd.iter().chain(&m.signal).chain(&m.histogram).all(|v| *v == 0.0));
    }

    #[test]
    #[should_panic(expected = "contract violation")]
    fn macd_length_equal_to_slow_panics() {
        macd(&[1.0; 26], 12, 26, 9);
    }

    #[test]
    fn bollinger_examples() {
        let b = bollinger(&[1.0, 2.0, 3.0, 4.0], 4, 2.0);
        assert_eq!(b.middle[3], Some(2.5));
        assert!((b.upper[3].unwrap() - 4.73607).abs() < 1e-5);
        let c = bollinger(&[7.0; 5], 3, 2.0);
        assert_eq!(c.upper[4], Some(7.0));
        assert_eq!(c.lower[4], Some(7.0));
        let z = bollinger(&[1.0, 5.0, 2.0], 2, 0.0);
        assert_eq!(z.upper[2], z.middle[2]);
        assert_eq!(z.lower[2], z.middle[2]);
    }

    #[test]
    fn forward_fill_examples() {
        assert_eq!(
            forward_fill(&[Some(1.0), None, None, Some(4.0)]).unwrap(),
            vec![1.0, 1.0, 1.0, 4.0]
        );
        assert_eq!(forward_fill(&[Some(1.0), Some(2.0)]).unwrap(), vec![1.0, 2.0]);
        assert!(matches!(forward_fill(&[None, Some(2.0)]), Err(DataError::LeadingGap)));
    }
}
