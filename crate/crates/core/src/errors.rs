//! Crate-wide error type.
//!
//! Every operation across the ledger, identity pool, publication graph,
//! contract engine and consensus returns `Result<T, Error>`. Failed
//! operations never mutate state: callers may retry or continue.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    // ---- token ledger ----
    #[error("total supply must be positive")]
    ZeroSupply,
    #[error("insufficient spendable funds: have {have}, need {need}")]
    InsufficientFunds { have: u64, need: u64 },
    #[error("signature rejected for {context}")]
    BadSignature { context: String },
    #[error("unknown address {0}")]
    UnknownAddress(String),
    #[error("zero-amount stakes and transfers are rejected")]
    ZeroStake,
    #[error("payout total {payout} does not match escrow amount {escrow}")]
    PayoutMismatch { escrow: u64, payout: u64 },
    #[error("escrow {0} already reached a terminal state")]
    AlreadyTerminal(String),
    #[error("duplicate transaction id {0}")]
    DuplicateTransaction(String),
    #[error("arithmetic overflow in {0}")]
    ArithmeticOverflow(&'static str),

    // ---- publication graph ----
    #[error("malformed component: {0}")]
    MalformedComponent(String),
    #[error("genesis manuscript already initialized")]
    GenesisExists,
    #[error("citation target {0} is not confirmed")]
    UnconfirmedCitation(String),
    #[error("authorship shares must sum to exactly 1")]
    SharesDontSumToOne,
    #[error("missing required signature from {0}")]
    MissingSignature(String),
    #[error("manuscript is locked against modification")]
    LockedManuscript,
    #[error("manuscript is not under review")]
    NotUnderReview,
    #[error("reviewer has no active review contract for this manuscript")]
    NoReviewContract,
    #[error("authors may not review their own manuscript")]
    ReviewerIsAuthor,
    #[error("unknown manuscript {0}")]
    UnknownManuscript(String),

    // ---- contract engine ----
    #[error("invalid shares: {0}")]
    InvalidShares(String),
    #[error("unknown party {0}")]
    UnknownParty(String),
    #[error("{0} is not a party to this contract")]
    NotAParty(String),
    #[error("contract is already active")]
    AlreadyActive,
    #[error("contract is locked or settled and cannot be cancelled")]
    AlreadyLocked,
    #[error("trigger event does not match contract state: {0}")]
    StateMismatch(String),
    #[error("unknown contract {0}")]
    UnknownContract(String),

    // ---- consensus ----
    #[error("no eligible reviewers in the pool")]
    EmptyPool,
    #[error("manuscript is not confirmed")]
    NotConfirmed,

    // ---- scenario / cli ----
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("scenario step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("unknown export format {0}")]
    UnknownFormat(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable category, used on the CLI diagnostics stream.
    pub fn category(&self) -> &'static str {
        match self {
            Error::ZeroSupply => "zero-supply",
            Error::InsufficientFunds { .. } => "insufficient-funds",
            Error::BadSignature { .. } => "bad-signature",
            Error::UnknownAddress(_) => "unknown-address",
            Error::ZeroStake => "zero-stake",
            Error::PayoutMismatch { .. } => "payout-mismatch",
            Error::AlreadyTerminal(_) => "already-terminal",
            Error::DuplicateTransaction(_) => "duplicate-transaction",
            Error::ArithmeticOverflow(_) => "arithmetic-overflow",
            Error::MalformedComponent(_) => "malformed-component",
            Error::GenesisExists => "genesis-exists",
            Error::UnconfirmedCitation(_) => "unconfirmed-citation",
            Error::SharesDontSumToOne => "shares-dont-sum-to-one",
            Error::MissingSignature(_) => "missing-signature",
            Error::LockedManuscript => "locked-manuscript",
            Error::NotUnderReview => "not-under-review",
            Error::NoReviewContract => "no-review-contract",
            Error::ReviewerIsAuthor => "reviewer-is-author",
            Error::UnknownManuscript(_) => "unknown-manuscript",
            Error::InvalidShares(_) => "invalid-shares",
            Error::UnknownParty(_) => "unknown-party",
            Error::NotAParty(_) => "not-a-party",
            Error::AlreadyActive => "already-active",
            Error::AlreadyLocked => "already-locked",
            Error::StateMismatch(_) => "state-mismatch",
            Error::UnknownContract(_) => "unknown-contract",
            Error::EmptyPool => "empty-pool",
            Error::NotConfirmed => "not-confirmed",
            Error::ParseError { .. } => "parse-error",
            Error::StepFailed { source, .. } => source.category(),
            Error::UnknownFormat(_) => "unknown-format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
