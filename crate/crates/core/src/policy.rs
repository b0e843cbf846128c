//! Ecosystem policy knobs: confirmation threshold, stake sizes,
//! distribution split, withdrawal refund fraction, self-citation rule and
//! reviewer candidate count.
//!
//! Loaded from a flat `key=value` file; every scenario report prints the
//! active values in its header.

use crate::amount::{parse_weight, weight_to_string, TokenAmount, Weight};
use crate::errors::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelfCitationRule {
    Allow,
    /// Divert the author-class share of a self-citation's settlement to
    /// the treasury; reviewer and remark classes are untouched.
    RedirectAuthorsToTreasury,
}

impl SelfCitationRule {
    pub fn parse(s: &str) -> Option<SelfCitationRule> {
        match s {
            "allow" => Some(SelfCitationRule::Allow),
            "redirect-authors-to-treasury" => Some(SelfCitationRule::RedirectAuthorsToTreasury),
            _ => None,
        }
    }

    pub fn render(&self) -> &'static str {
        match self {
            SelfCitationRule::Allow => "allow",
            SelfCitationRule::RedirectAuthorsToTreasury => "redirect-authors-to-treasury",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Confirmations required to lock a manuscript (K).
    pub required_confirmations: u32,
    pub author_stake: TokenAmount,
    pub reviewer_stake: TokenAmount,
    /// (authors, reviewers, remarks) class weights; must sum to exactly 1.
    pub split: (Weight, Weight, Weight),
    /// Fraction of the author stake refunded on withdrawal.
    pub refund_fraction: Weight,
    pub self_citation_rule: SelfCitationRule,
    /// Reviewer candidates returned per selection round.
    pub candidate_count: u32,
    /// Pre-mined total supply, all minted to the treasury at genesis.
    pub total_supply: TokenAmount,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            required_confirmations: 2,
            author_stake: TokenAmount(100),
            reviewer_stake: TokenAmount(10),
            split: (Weight::new(1, 2), Weight::new(3, 10), Weight::new(1, 5)),
            refund_fraction: Weight::new(1, 2),
            self_citation_rule: SelfCitationRule::Allow,
            candidate_count: 5,
            total_supply: TokenAmount(1_000_000_000),
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.required_confirmations == 0 {
            return Err(Error::StateMismatch(
                "required_confirmations must be at least 1".into(),
            ));
        }
        let (a, b, c) = self.split;
        if a + b + c != Weight::from_integer(1) {
            return Err(Error::InvalidShares(
                "split weights must sum to exactly 1".into(),
            ));
        }
        if self.refund_fraction > Weight::from_integer(1) {
            return Err(Error::InvalidShares(
                "refund_fraction must lie in [0, 1]".into(),
            ));
        }
        if self.candidate_count == 0 {
            return Err(Error::StateMismatch(
                "candidate_count must be at least 1".into(),
            ));
        }
        if self.total_supply.is_zero() {
            return Err(Error::ZeroSupply);
        }
        Ok(())
    }

    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::ParseError {
            line: 0,
            msg: format!("bad policy value for {what}: {value}"),
        };
        match key {
            "required_confirmations" => {
                self.required_confirmations =
                    value.parse().map_err(|_| bad("required_confirmations"))?
            }
            "author_stake" => {
                self.author_stake = TokenAmount(value.parse().map_err(|_| bad("author_stake"))?)
            }
            "reviewer_stake" => {
                self.reviewer_stake =
                    TokenAmount(value.parse().map_err(|_| bad("reviewer_stake"))?)
            }
            "split_authors" => self.split.0 = parse_weight(value).ok_or_else(|| bad("split_authors"))?,
            "split_reviewers" => {
                self.split.1 = parse_weight(value).ok_or_else(|| bad("split_reviewers"))?
            }
            "split_remarks" => self.split.2 = parse_weight(value).ok_or_else(|| bad("split_remarks"))?,
            "refund_fraction" => {
                self.refund_fraction = parse_weight(value).ok_or_else(|| bad("refund_fraction"))?
            }
            "self_citation_rule" => {
                self.self_citation_rule =
                    SelfCitationRule::parse(value).ok_or_else(|| bad("self_citation_rule"))?
            }
            "candidate_count" => {
                self.candidate_count = value.parse().map_err(|_| bad("candidate_count"))?
            }
            "total_supply" => {
                self.total_supply = TokenAmount(value.parse().map_err(|_| bad("total_supply"))?)
            }
            _ => {
                return Err(Error::ParseError {
                    line: 0,
                    msg: format!("unknown policy key: {key}"),
                })
            }
        }
        Ok(())
    }

    /// Parse a whole flat config file (`#` comments, blank lines allowed).
    pub fn from_config_text(text: &str) -> Result<PolicyConfig> {
        let mut policy = PolicyConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::ParseError {
                line: i + 1,
                msg: format!("expected key=value, got: {line}"),
            })?;
            policy.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::ParseError { msg, .. } => Error::ParseError { line: i + 1, msg },
                other => other,
            })?;
        }
        policy.validate()?;
        Ok(policy)
    }

    /// Render as the same `key=value` lines the parser accepts.
    pub fn render_lines(&self) -> Vec<String> {
        vec![
            format!("required_confirmations={}", self.required_confirmations),
            format!("author_stake={}", self.author_stake),
            format!("reviewer_stake={}", self.reviewer_stake),
            format!("split_authors={}", weight_to_string(&self.split.0)),
            format!("split_reviewers={}", weight_to_string(&self.split.1)),
            format!("split_remarks={}", weight_to_string(&self.split.2)),
            format!("refund_fraction={}", weight_to_string(&self.refund_fraction)),
            format!("self_citation_rule={}", self.self_citation_rule.render()),
            format!("candidate_count={}", self.candidate_count),
            format!("total_supply={}", self.total_supply),
        ]
    }
}
