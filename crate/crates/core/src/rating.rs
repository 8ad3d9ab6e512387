//! Glicko-2 rating updates, extended with a tie rule.
//!
//! Each game is treated as its own rating period. The inactivity widening of
//! the rating deviation is switched off: players are frozen snapshots, so
//! time away from the board carries no information. A consequence is that a
//! game never increases a player's deviation.
//!
//! Ties do not use the native score of 0.5 for the rating itself. Instead a
//! tie moves the rating by `tie_ratio` times the change the player would have
//! seen had it won (opponent rated higher) or lost (opponent rated lower).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Display-scale rating that maps to an internal mean of zero.
pub const RATING_CENTER: f64 = 1500.0;
/// Conversion factor between display and internal scales.
pub const GLICKO2_SCALE: f64 = 173.7178;
/// Smallest deviation (display scale) used in any computation.
pub const MIN_DEVIATION: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RatingError {
    #[error("invalid rating state: {field} = {value}")]
    InvalidState { field: &'static str, value: f64 },
    #[error("invalid rating config: {field} ({reason})")]
    InvalidConfig { field: &'static str, reason: &'static str },
    #[error("a rating period needs at least one opponent")]
    NoOpponents,
    #[error("decisive score must be 0 or 1, got {0}")]
    InvalidScore(f64),
    #[error("volatility iteration did not converge within {0} iterations")]
    VolatilityNotConverged(u32),
}

/// A player's skill estimate on the display scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingState {
    pub rating: f64,
    pub deviation: f64,
    pub volatility: f64,
}

impl RatingState {
    pub fn new(rating: f64, deviation: f64, volatility: f64) -> Self {
        Self {
            rating,
            deviation,
            volatility,
        }
    }

    pub fn validate(&self) -> Result<(), RatingError> {
        if !self.rating.is_finite() {
            return Err(RatingError::InvalidState {
                field: "rating",
                value: self.rating,
            });
        }
        if !(self.deviation.is_finite() && self.deviation > 0.0) {
            return Err(RatingError::InvalidState {
                field: "deviation",
                value: self.deviation,
            });
        }
        if !(self.volatility.is_finite() && self.volatility > 0.0) {
            return Err(RatingError::InvalidState {
                field: "volatility",
                value: self.volatility,
            });
        }
        Ok(())
    }
}

impl Default for RatingState {
    fn default() -> Self {
        Self::new(1500.0, 350.0, 0.06)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatingConfig {
    /// Constrains the change in volatility between periods.
    pub tau: f64,
    /// Convergence tolerance of the volatility iteration.
    pub epsilon: f64,
    /// Fraction of the counterfactual decisive change applied on a tie.
    pub tie_ratio: f64,
    pub initial_rating: f64,
    pub initial_deviation: f64,
    pub initial_volatility: f64,
    pub scale: f64,
    pub max_iterations: u32,
}

impl Default for RatingConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            epsilon: 1e-6,
            tie_ratio: 0.1,
            initial_rating: 1500.0,
            initial_deviation: 350.0,
            initial_volatility: 0.06,
            scale: GLICKO2_SCALE,
            max_iterations: 100,
        }
    }
}

impl RatingConfig {
    pub fn validate(&self) -> Result<(), RatingError> {
        let bad = |field, reason| Err(RatingError::InvalidConfig { field, reason });
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad("tau", "must be positive");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.tie_ratio) {
            return bad("tie_ratio", "must lie in [0, 1]");
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return bad("scale", "must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations", "must be at least 1");
        }
        let initial = self.initial_state();
        if initial.validate().is_err() {
            return bad(
                "initial_*",
                "initial state must be finite with positive deviation and volatility",
            );
        }
        Ok(())
    }

    pub fn initial_state(&self) -> RatingState {
        RatingState::new(self.initial_rating, self.initial_deviation, self.initial_volatility)
    }
}

/// Result of one game from the first player's perspective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameOutcome {
    Win,
    Loss,
    Tie,
}

impl GameOutcome {
    pub fn score(self) -> f64 {
        match self {
            GameOutcome::Win => 1.0,
            GameOutcome::Loss => 0.0,
            GameOutcome::Tie => 0.5,
        }
    }

    /// The same game seen from the other player.
    pub fn reversed(self) -> Self {
        match self {
            GameOutcome::Win => GameOutcome::Loss,
            GameOutcome::Loss => GameOutcome::Win,
            GameOutcome::Tie => GameOutcome::Tie,
        }
    }
}

/// One game result against an opponent, on the display scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Opponent {
    pub rating: f64,
    pub deviation: f64,
    pub score: f64,
}

impl Opponent {
    pub fn new(rating: f64, deviation: f64, score: f64) -> Self {
        Self {
            rating,
            deviation,
            score,
        }
    }
}

pub fn to_internal(state: &RatingState, config: &RatingConfig) -> (f64, f64) {
    (
        (state.rating - RATING_CENTER) / config.scale,
        state.deviation / config.scale,
    )
}

pub fn from_internal(mu: f64, phi: f64, volatility: f64, config: &RatingConfig) -> RatingState {
    RatingState::new(mu * config.scale + RATING_CENTER, phi * config.scale, volatility)
}

/// Attenuation of an opponent's influence by its deviation.
pub fn g(phi: f64) -> f64 {
    debug_assert!(phi >= 0.0, "g is defined for phi >= 0");
    1.0 / (1.0 + 3.0 * phi * phi / (PI * PI)).sqrt()
}

/// Win expectancy of a player at `mu` against one at `mu_j` with deviation `phi_j`.
pub fn expected_score(mu: f64, mu_j: f64, phi_j: f64) -> f64 {
    1.0 / (1.0 + (-g(phi_j) * (mu - mu_j)).exp())
}

/// The volatility equation solved at each update, in `x = ln(sigma^2)`.
#[derive(Debug, Clone, Copy)]
pub struct VolatilityProblem {
    pub delta: f64,
    pub phi: f64,
    pub variance: f64,
    pub volatility: f64,
    pub tau: f64,
}

impl VolatilityProblem {
    fn a(&self) -> f64 {
        (self.volatility * self.volatility).ln()
    }

    pub fn f(&self, x: f64) -> f64 {
        let ex = x.exp();
        let phi2 = self.phi * self.phi;
        let num = ex * (self.delta * self.delta - phi2 - self.variance - ex);
        let den = 2.0 * (phi2 + self.variance + ex).powi(2);
        num / den - (x - self.a()) / (self.tau * self.tau)
    }

    /// Initial bracket `[A, B]` with `f(A)` and `f(B)` of opposite sign (or zero).
    pub fn bracket(&self) -> (f64, f64) {
        let a = self.a();
        let phi2 = self.phi * self.phi;
        let d2 = self.delta * self.delta;
        let upper = if d2 > phi2 + self.variance {
            (d2 - phi2 - self.variance).ln()
        } else {
            let mut k = 1.0;
            while self.f(a - k * self.tau) < 0.0 {
                k += 1.0;
            }
            a - k * self.tau
        };
        (a, upper)
    }

    /// Illinois regula falsi. Returns the new volatility `sigma'`.
    ///
    /// Stops once the bracket is narrower than `epsilon` and the best endpoint
    /// has `|f| < epsilon`.
    pub fn solve(&self, epsilon: f64, max_iterations: u32) -> Result<f64, RatingError> {
        let (mut a, mut b) = self.bracket();
        let mut fa = self.f(a);
        let mut fb = self.f(b);
        for _ in 0..max_iterations {
            let (best, fbest) = if fa.abs() <= fb.abs() { (a, fa) } else { (b, fb) };
            if ((b - a).abs() <= epsilon && fbest.abs() < epsilon) || fbest == 0.0 {
                return Ok((best / 2.0).exp());
            }
            let c = a + (a - b) * fa / (fb - fa);
            let fc = self.f(c);
            if fc * fb <= 0.0 {
                a = b;
                fa = fb;
            } else {
                fa /= 2.0;
            }
            b = c;
            fb = fc;
        }
        Err(RatingError::VolatilityNotConverged(max_iterations))
    }
}

/// One Glicko-2 rating period with arbitrary scores in [0, 1].
fn rate_period(state: &RatingState, opponents: &[Opponent], config: &RatingConfig) -> Result<RatingState, RatingError> {
    config.validate()?;
    state.validate()?;
    if opponents.is_empty() {
        return Err(RatingError::NoOpponents);
    }
    let floor = MIN_DEVIATION / config.scale;
    let (mu, phi) = to_internal(state, config);
    let phi = phi.max(floor);

    let mut inv_v = 0.0;
    let mut sum = 0.0;
    for opp in opponents {
        if !opp.rating.is_finite() || !opp.deviation.is_finite() || opp.deviation < 0.0 {
            return Err(RatingError::InvalidState {
                field: "opponent",
                value: if opp.rating.is_finite() {
                    opp.deviation
                } else {
                    opp.rating
                },
            });
        }
        if !(0.0..=1.0).contains(&opp.score) {
            return Err(RatingError::InvalidScore(opp.score));
        }
        let mu_j = (opp.rating - RATING_CENTER) / config.scale;
        let phi_j = (opp.deviation / config.scale).max(floor);
        let gj = g(phi_j);
        let e = expected_score(mu, mu_j, phi_j);
        inv_v += gj * gj * e * (1.0 - e);
        sum += gj * (opp.score - e);
    }
    let variance = 1.0 / inv_v;
    let delta = variance * sum;

    let problem = VolatilityProblem {
        delta,
        phi,
        variance,
        volatility: state.volatility,
        tau: config.tau,
    };
    let sigma = problem.solve(config.epsilon, config.max_iterations)?;

    let phi_star2 = phi * phi + sigma * sigma;
    let phi_new = (1.0 / (1.0 / phi_star2 + inv_v)).sqrt();
    // No inactivity widening: a game never leaves the deviation above its pre-game value.
    let capped = phi_new >= phi;
    let phi_new = phi_new.min(phi).max(floor);
    let mu_new = mu + phi_new * phi_new * sum;
    let mut next = from_internal(mu_new, phi_new, sigma, config);
    if capped {
        next.deviation = state.deviation.max(MIN_DEVIATION);
    }
    Ok(next)
}

/// Standard Glicko-2 update for a period of decisive games (scores 0 or 1).
pub fn update_decisive(
    state: &RatingState,
    opponents: &[Opponent],
    config: &RatingConfig,
) -> Result<RatingState, RatingError> {
    if let Some(opp) = opponents.iter().find(|o| o.score != 0.0 && o.score != 1.0) {
        return Err(RatingError::InvalidScore(opp.score));
    }
    rate_period(state, opponents, config)
}

/// A player that did not play keeps its state unchanged.
pub fn update_inactive(state: &RatingState, _config: &RatingConfig) -> RatingState {
    *state
}

/// Update `state` after a tie with `opponent`.
///
/// Deviation and volatility come from the score-0.5 update. The rating moves
/// toward the counterfactual decisive result by `tie_ratio`: up when the
/// opponent is rated higher, down when rated lower, unchanged when equal.
pub fn update_tie(
    state: &RatingState,
    opponent: &RatingState,
    config: &RatingConfig,
) -> Result<RatingState, RatingError> {
    opponent.validate()?;
    let against = |score| [Opponent::new(opponent.rating, opponent.deviation, score)];
    let drawn = rate_period(state, &against(0.5), config)?;

    let rating = if opponent.rating > state.rating {
        let won = rate_period(state, &against(1.0), config)?;
        state.rating + config.tie_ratio * (won.rating - state.rating)
    } else if opponent.rating < state.rating {
        let lost = rate_period(state, &against(0.0), config)?;
        state.rating + config.tie_ratio * (lost.rating - state.rating)
    } else {
        state.rating
    };
    Ok(RatingState { rating, ..drawn })
}

/// Updates both participants of a single game.
pub fn update_game(
    first: &RatingState,
    second: &RatingState,
    outcome: GameOutcome,
    config: &RatingConfig,
) -> Result<(RatingState, RatingState), RatingError> {
    match outcome {
        GameOutcome::Tie => Ok((update_tie(first, second, config)?, update_tie(second, first, config)?)),
        decisive => {
            let s = decisive.score();
            let a = update_decisive(first, &[Opponent::new(second.rating, second.deviation, s)], config)?;
            let b = update_decisive(second, &[Opponent::new(first.rating, first.deviation, 1.0 - s)], config)?;
            Ok((a, b))
        }
    }
}
