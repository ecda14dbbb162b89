//! Doubling-then-bisection search for the largest slope passing a predicate.

use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub m_start: f64,
    pub m_cap: f64,
    pub tolerance: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { m_start: 1.0, m_cap: 1000.0, tolerance: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchOutcome {
    Bounded,
    NoLimitBelowCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchStep<V> {
    pub slope: f64,
    pub pass: bool,
    pub detail: V,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult<V> {
    /// largest passing slope when a failing one was found
    pub limit: Option<f64>,
    /// largest slope known to pass
    pub bracket_low: f64,
    /// smallest slope known to fail
    pub bracket_high: Option<f64>,
    pub outcome: SearchOutcome,
    pub steps: Vec<SearchStep<V>>,
}

impl<V> SearchResult<V> {
    pub fn evaluations(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BracketError<E> {
    InvalidOptions(&'static str),
    StartFails(f64),
    Eval(E),
}

/// Double from `m_start` until the predicate fails or `m_cap` passes, then
/// bisect the bracket down to `tolerance`. Assumes passing is monotone in
/// the slope; every evaluation is recorded so violations stay visible.
pub fn bracket_search<V, E>(
    opts: &SearchOptions,
    mut eval: impl FnMut(f64) -> Result<(bool, V), E>,
) -> Result<SearchResult<V>, BracketError<E>> {
    if !(opts.m_start > 0.0 && opts.m_start <= opts.m_cap && opts.m_cap.is_finite()) {
        return Err(BracketError::InvalidOptions("requires 0 < m_start <= m_cap"));
    }
    if !(opts.tolerance > 0.0) {
        return Err(BracketError::InvalidOptions("tolerance must be > 0"));
    }
    let mut steps = Vec::new();
    let mut run = |m: f64, steps: &mut Vec<SearchStep<V>>| -> Result<bool, BracketError<E>> {
        let (pass, detail) = eval(m).map_err(BracketError::Eval)?;
        steps.push(SearchStep { slope: m, pass, detail });
        Ok(pass)
    };
    if !run(opts.m_start, &mut steps)? {
        return Err(BracketError::StartFails(opts.m_start));
    }
    let mut low = opts.m_start;
    let mut high = None;
    while low < opts.m_cap {
        let next = (2.0 * low).min(opts.m_cap);
        if run(next, &mut steps)? {
            low = next;
        } else {
            high = Some(next);
            break;
        }
    }
    let Some(mut hi) = high else {
        return Ok(SearchResult {
            limit: None,
            bracket_low: low,
            bracket_high: None,
            outcome: SearchOutcome::NoLimitBelowCap,
            steps,
        });
    };
    while hi - low > opts.tolerance {
        let mid = 0.5 * (low + hi);
        if run(mid, &mut steps)? {
            low = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SearchResult { limit: Some(low), bracket_low: low, bracket_high: Some(hi), outcome: SearchOutcome::Bounded, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn threshold(t: f64) -> impl FnMut(f64) -> Result<(bool, ()), ()> {
        move |m| Ok((m <= t, ()))
    }

    #[test]
    fn finds_threshold_within_tolerance() {
        let r = bracket_search(&SearchOptions::default(), threshold(37.3)).unwrap();
        let m = r.limit.unwrap();
        assert!(m <= 37.3 && 37.3 - m <= 0.1);
        assert!(r.bracket_high.unwrap() > 37.3);
        assert_eq!(r.outcome, SearchOutcome::Bounded);
        assert!(r.steps.iter().any(|s| !s.pass));
    }

    #[test]
    fn cap_reached() {
        let r = bracket_search(&SearchOptions::default(), threshold(f64::INFINITY)).unwrap();
        assert_eq!(r.outcome, SearchOutcome::NoLimitBelowCap);
        assert_eq!(r.limit, None);
        assert_eq!(r.bracket_low, 1000.0);
        assert_eq!(r.steps.last().unwrap().slope, 1000.0);
    }

    #[test]
    fn failing_start_is_an_error() {
        let r = bracket_search(&SearchOptions::default(), threshold(0.5));
        assert_eq!(r, Err(BracketError::StartFails(1.0)));
    }

    #[test]
    fn bad_options() {
        let o = SearchOptions { m_start: 0.0, ..SearchOptions::default() };
        assert!(matches!(bracket_search(&o, threshold(1.0)), Err(BracketError::InvalidOptions(_))));
    }
}
