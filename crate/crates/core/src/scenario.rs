//! Scenario scripts: a line-oriented command language that drives whole
//! publication lifecycles deterministically, plus the runner and report
//! artifacts.
//!
//! One command per line, whitespace-separated tokens, double quotes for
//! text with spaces, `#` starts a comment. Entities are declared with
//! symbolic names and referenced by them afterwards; `genesis` and
//! `treasury` are predeclared. Header directives:
//!
//! ```text
//! seed 42
//! policy required_confirmations=2
//! ```
//!
//! Commands:
//!
//! ```text
//! create-user alice name="Alice A" keywords=chain,review ids=orcid:0000-0001 roles=author opt-in=yes
//! propose-contract c1 authorship parties=alice,bob shares=3/5,2/5 stake=100
//! propose-contract r1 review parties=carol manuscript=m1
//! propose-contract f1 funding parties=erin authorship=c1 covered=1/2 clawback=1/5
//! propose-contract x1 indexing parties=venue venue="conf" k=3 whitelist=carol clawback=0
//! sign-contract c1 alice
//! cancel-contract r1 by=carol
//! submit m1 contract=c1 content="the manuscript body" citations=genesis
//! revise m1 content="second version" citations=genesis,m0
//! review m1 carol confirm "solid work"
//! attach-remark m1 erin kind=funding stake=50 contract=f1 terms="grant"
//! withdraw m1
//! advance-tick
//! ```

use crate::amount::{parse_weight, TokenAmount, Weight};
use crate::contracts::{ContractId, ContractKind, ContractTerms, ShareTable};
use crate::crypto::{sha256, Address, Hash32};
use crate::engine::Engine;
use crate::errors::{Error, Result};
use crate::graph::{ManuscriptId, RemarkKind, Verdict};
use crate::identity::{scholar_id_well_formed, Profile, Role};
use crate::policy::PolicyConfig;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioScript {
    pub seed: u64,
    pub policy: PolicyConfig,
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptStep {
    pub line: usize,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    CreateUser {
        name: String,
        profile: Profile,
    },
    ProposeContract {
        name: String,
        kind: ContractKind,
        parties: Vec<String>,
        shares: Option<Vec<Weight>>,
        stake: Option<u64>,
        manuscript: Option<String>,
        covered: Option<Weight>,
        clawback: Option<Weight>,
        authorship: Option<String>,
        venue: Option<String>,
        k_override: Option<u32>,
        whitelist: Option<Vec<String>>,
    },
    SignContract {
        contract: String,
        party: String,
    },
    CancelContract {
        contract: String,
        by: Vec<String>,
    },
    Submit {
        name: String,
        contract: String,
        content: String,
        citations: Vec<String>,
    },
    Revise {
        manuscript: String,
        content: String,
        citations: Option<Vec<String>>,
        authors: Option<Vec<String>>,
        shares: Option<Vec<Weight>>,
    },
    Review {
        manuscript: String,
        reviewer: String,
        verdict: Verdict,
        report: String,
    },
    AttachRemark {
        manuscript: String,
        agent: String,
        kind: RemarkKind,
        stake: u64,
        contract: String,
        terms: String,
    },
    Withdraw {
        manuscript: String,
    },
    AdvanceTick,
}

// ---------------------------------------------------------------------------
// Tokenizer and parser
// ---------------------------------------------------------------------------

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::ParseError {
        line,
        msg: msg.into(),
    }
}

/// Split a line into tokens; double quotes glue whitespace and support
/// \" \\ \n \r escapes. A `#` outside quotes starts a comment.
fn tokenize(line: &str, lineno: usize) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    let mut started = false;
    while let Some(c) = chars.next() {
        match c {
            '"' => {
                in_quotes = !in_quotes;
                started = true;
            }
            '\\' if in_quotes => match chars.next() {
                Some('"') => current.push('"'),
                Some('\\') => current.push('\\'),
                Some('n') => current.push('\n'),
                Some('r') => current.push('\r'),
                other => {
                    return Err(bad(
                        lineno,
                        format!("bad escape \\{}", other.map(String::from).unwrap_or_default()),
                    ))
                }
            },
            '#' if !in_quotes => break,
            c if c.is_whitespace() && !in_quotes => {
                if started || !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                    started = false;
                }
            }
            c => {
                current.push(c);
                started = true;
            }
        }
    }
    if in_quotes {
        return Err(bad(lineno, "unterminated quote"));
    }
    if started || !current.is_empty() {
        tokens.push(current);
    }
    Ok(tokens)
}

struct Args {
    line: usize,
    positional: Vec<String>,
    named: BTreeMap<String, String>,
}

impl Args {
    fn from_tokens(tokens: &[String], line: usize) -> Args {
        let mut positional = Vec::new();
        let mut named = BTreeMap::new();
        for token in tokens {
            match token.split_once('=') {
                Some((k, v)) if !k.is_empty() && !k.contains('"') => {
                    named.insert(k.to_string(), v.to_string());
                }
                _ => positional.push(token.clone()),
            }
        }
        Args {
            line,
            positional,
            named,
        }
    }

    fn named(&self, key: &str) -> Option<&str> {
        self.named.get(key).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.named(key)
            .ok_or_else(|| bad(self.line, format!("missing {key}=")))
    }

    fn list(&self, key: &str) -> Option<Vec<String>> {
        self.named(key)
            .map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    }
}

/// Names already declared, for reference checking at parse time.
#[derive(Default)]
struct Declared {
    users: BTreeSet<String>,
    contracts: BTreeSet<String>,
    manuscripts: BTreeSet<String>,
}

impl Declared {
    fn new() -> Declared {
        let mut d = Declared::default();
        d.manuscripts.insert("genesis".to_string());
        d.users.insert("treasury".to_string());
        d
    }

    fn user(&self, name: &str, line: usize) -> Result<()> {
        if self.users.contains(name) {
            Ok(())
        } else {
            Err(bad(line, format!("unknown user {name}")))
        }
    }

    fn contract(&self, name: &str, line: usize) -> Result<()> {
        if self.contracts.contains(name) {
            Ok(())
        } else {
            Err(bad(line, format!("unknown contract {name}")))
        }
    }

    fn manuscript(&self, name: &str, line: usize) -> Result<()> {
        if self.manuscripts.contains(name) {
            Ok(())
        } else {
            Err(bad(line, format!("unknown manuscript {name}")))
        }
    }
}

pub fn parse_script(text: &str) -> Result<ScenarioScript> {
    let mut seed = 0u64;
    let mut policy = PolicyConfig::default();
    let mut steps = Vec::new();
    let mut declared = Declared::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let tokens = tokenize(raw, lineno)?;
        if tokens.is_empty() {
            continue;
        }
        let command = tokens[0].as_str();
        let args = Args::from_tokens(&tokens[1..], lineno);
        match command {
            "seed" => {
                seed = args
                    .positional
                    .first()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(lineno, "seed expects an integer"))?;
            }
            "policy" => {
                for (key, value) in &args.named {
                    policy.set(key, value).map_err(|e| match e {
                        Error::ParseError { msg, .. } => bad(lineno, msg),
                        other => other,
                    })?;
                }
            }
            "create-user" => {
                let name = args
                    .positional
                    .first()
                    .cloned()
                    .ok_or_else(|| bad(lineno, "create-user expects a name"))?;
                if declared.users.contains(&name) {
                    return Err(bad(lineno, format!("user {name} already declared")));
                }
                let mut scholar_ids = BTreeMap::new();
                if let Some(ids) = args.list("ids") {
                    for id in ids {
                        let (scheme, value) = id
                            .split_once(':')
                            .ok_or_else(|| bad(lineno, format!("bad id {id}, want scheme:value")))?;
                        if !scholar_id_well_formed(scheme, value) {
                            return Err(bad(lineno, format!("malformed scholar id {id}")));
                        }
                        scholar_ids.insert(scheme.to_string(), value.to_string());
                    }
                }
                let mut roles = BTreeSet::new();
                if let Some(list) = args.list("roles") {
                    for role in list {
                        roles.insert(
                            Role::parse(&role)
                                .ok_or_else(|| bad(lineno, format!("unknown role {role}")))?,
                        );
                    }
                }
                let opt_in = match args.named("opt-in") {
                    None | Some("no") | Some("false") => false,
                    Some("yes") | Some("true") => true,
                    Some(other) => return Err(bad(lineno, format!("bad opt-in value {other}"))),
                };
                let profile = Profile {
                    display_name: args.named("name").unwrap_or(&name).to_string(),
                    keywords: args.list("keywords").unwrap_or_default().into_iter().collect(),
                    scholar_ids,
                    roles,
                    reviewer_opt_in: opt_in,
                };
                declared.users.insert(name.clone());
                steps.push(ScriptStep {
                    line: lineno,
                    command: Command::CreateUser { name, profile },
                });
            }
            "propose-contract" => {
                let name = args
                    .positional
                    .first()
                    .cloned()
                    .ok_or_else(|| bad(lineno, "propose-contract expects a name"))?;
                if declared.contracts.contains(&name) {
                    return Err(bad(lineno, format!("contract {name} already declared")));
                }
                let kind = match args.positional.get(1).map(|s| s.as_str()) {
                    Some("authorship") => ContractKind::Authorship,
                    Some("review") => ContractKind::Review,
                    Some("funding") => ContractKind::Funding,
                    Some("indexing") => ContractKind::Indexing,
                    other => {
                        return Err(bad(
                            lineno,
                            format!("unknown contract kind {}", other.unwrap_or("<none>")),
                        ))
                    }
                };
                let parties = args
                    .list("parties")
                    .ok_or_else(|| bad(lineno, "missing parties="))?;
                for party in &parties {
                    declared.user(party, lineno)?;
                }
                let shares = match args.named("shares") {
                    Some(raw) => Some(
                        raw.split(',')
                            .map(|s| {
                                parse_weight(s)
                                    .ok_or_else(|| bad(lineno, format!("bad share {s}")))
                            })
                            .collect::<Result<Vec<Weight>>>()?,
                    ),
                    None => None,
                };
                let stake = match args.named("stake") {
                    Some(s) => Some(
                        s.parse()
                            .map_err(|_| bad(lineno, format!("bad stake {s}")))?,
                    ),
                    None => None,
                };
                let manuscript = args.named("manuscript").map(String::from);
                if let Some(m) = &manuscript {
                    declared.manuscript(m, lineno)?;
                }
                let authorship = args.named("authorship").map(String::from);
                if let Some(a) = &authorship {
                    declared.contract(a, lineno)?;
                }
                let parse_w = |key: &str| -> Result<Option<Weight>> {
                    match args.named(key) {
                        Some(s) => Ok(Some(parse_weight(s).ok_or_else(|| {
                            bad(lineno, format!("bad {key} value {s}"))
                        })?)),
                        None => Ok(None),
                    }
                };
                let covered = parse_w("covered")?;
                let clawback = parse_w("clawback")?;
                let k_override = match args.named("k") {
                    Some(s) => Some(s.parse().map_err(|_| bad(lineno, format!("bad k {s}")))?),
                    None => None,
                };
                let whitelist = args.list("whitelist");
                if let Some(list) = &whitelist {
                    for user in list {
                        declared.user(user, lineno)?;
                    }
                }
                declared.contracts.insert(name.clone());
                steps.push(ScriptStep {
                    line: lineno,
                    command: Command::ProposeContract {
                        name,
                        kind,
                        parties,
                        shares,
                        stake,
                        manuscript,
                        covered,
                        clawback,
                        authorship,
                        venue: args.named("venue").map(String::from),
                        k_override,
                        whitelist,
                    },
                });
            }
            "sign-contract" => {
                let contract = args
                    .positional
                    .first()
                    .cloned()
                    .ok_or_else(|| bad(lineno, "sign-contract expects a contract"))?;
                let party = args
                    .positional
                    .get(1)
                    .cloned()
                    .ok_or_else(|| bad(lineno, "sign-contract expects a party"))?;
                declared.contract(&contract, lineno)?;
                declared.user(&party, lineno)?;
                steps.push(ScriptStep {
                    line: lineno,
                    command: Command::SignContract { contract, party },
                });
            }
            "cancel-contract" => {
                let contract = args
                    .positional
                    .first()
                    .cloned()
                    .ok_or_else(|| bad(lineno, "cancel-contract expects a contract"))?;
                declared.contract(&contract, lineno)?;
                let by = args
                    .list("by")
                    .ok_or_else(|| bad(lineno, "missing by="))?;
                for user in &by {
                    declared.user(user, lineno)?;
                }
                steps.push(ScriptStep {
                    line: lineno,
                    command: Command::CancelContract { contract, by },
                });
            }
            "submit" => {
                let name = args
                    .positional
                    .first()
                    .cloned()
                    .ok_or_else(|| bad(lineno, "submit expects a manuscript name"))?;
                if declared.manuscripts.contains(&name) {
                    return Err(bad(lineno, format!("manuscript {name} already declared")));
                }
                let contract = args.require("contract")?.to_string();
                declared.contract(&contract, lineno)?;
                let citations = args
                    .list("citations")
                    .ok_or_else(|| bad(lineno, "missing citations="))?;
                for c in &citations {
                    declared.manuscript(c, lineno)?;
                }
                let content = args.require("content")?.to_string();
                declared.manuscripts.insert(name.clone());
                steps.push(ScriptStep {
                    line: lineno,
                    command: Command::Submit {
                        name,
                        contract,
                        content,
                        citations,
                    },
                });
            }
            "revise" => {
                let manuscript = args
                    .positional
                    .first()
                    .cloned()
                    .ok_or_else(|| bad(lineno, "revise expects a manuscript"))?;
                declared.manuscript(&manuscript, lineno)?;
                let citations = args.list("citations");
                if let Some(cs) = &citations {
                    for c in cs {
                        declared.manuscript(c, lineno)?;
                    }
                }
                let authors = args.list("authors");
                if let Some(list) = &authors {
                    for user in list {
                        declared.user(user, lineno)?;
                    }
                }
                let shares = match args.named("shares") {
                    Some(raw) => Some(
                        raw.split(',')
                            .map(|s| {
                                parse_weight(s)
                                    .ok_or_else(|| bad(lineno, format!("bad share {s}")))
                            })
                            .collect::<Result<Vec<Weight>>>()?,
                    ),
                    None => None,
                };
                if shares.is_some() && authors.is_none() {
                    return Err(bad(lineno, "shares= requires authors="));
                }
                steps.push(ScriptStep {
                    line: lineno,
                    command: Command::Revise {
                        manuscript,
                        content: args.require("content")?.to_string(),
                        citations,
                        authors,
                        shares,
                    },
                });
            }
            "review" => {
                let manuscript = args
                    .positional
                    .first()
                    .cloned()
                    .ok_or_else(|| bad(lineno, "review expects a manuscript"))?;
                let reviewer = args
                    .positional
                    .get(1)
                    .cloned()
                    .ok_or_else(|| bad(lineno, "review expects a reviewer"))?;
                let verdict = match args.positional.get(2).map(|s| s.as_str()) {
                    Some("confirm") => Verdict::Confirm,
                    Some("revise") => Verdict::Revise,
                    other => {
                        return Err(bad(
                            lineno,
                            format!("bad verdict {}", other.unwrap_or("<none>")),
                        ))
                    }
                };
                declared.manuscript(&manuscript, lineno)?;
                declared.user(&reviewer, lineno)?;
                let report = args.positional.get(3).cloned().unwrap_or_default();
                steps.push(ScriptStep {
                    line: lineno,
                    command: Command::Review {
                        manuscript,
                        reviewer,
                        verdict,
                        report,
                    },
                });
            }
            "attach-remark" => {
                let manuscript = args
                    .positional
                    .first()
                    .cloned()
                    .ok_or_else(|| bad(lineno, "attach-remark expects a manuscript"))?;
                let agent = args
                    .positional
                    .get(1)
                    .cloned()
                    .ok_or_else(|| bad(lineno, "attach-remark expects an agent"))?;
                declared.manuscript(&manuscript, lineno)?;
                declared.user(&agent, lineno)?;
                let kind = RemarkKind::parse(args.require("kind")?)
                    .ok_or_else(|| bad(lineno, "bad remark kind"))?;
                let stake: u64 = args
                    .require("stake")?
                    .parse()
                    .map_err(|_| bad(lineno, "bad stake"))?;
                let contract = args.require("contract")?.to_string();
                declared.contract(&contract, lineno)?;
                steps.push(ScriptStep {
                    line: lineno,
                    command: Command::AttachRemark {
                        manuscript,
                        agent,
                        kind,
                        stake,
                        contract,
                        terms: args.named("terms").unwrap_or("").to_string(),
                    },
                });
            }
            "withdraw" => {
                let manuscript = args
                    .positional
                    .first()
                    .cloned()
                    .ok_or_else(|| bad(lineno, "withdraw expects a manuscript"))?;
                declared.manuscript(&manuscript, lineno)?;
                steps.push(ScriptStep {
                    line: lineno,
                    command: Command::Withdraw { manuscript },
                });
            }
            "advance-tick" => {
                steps.push(ScriptStep {
                    line: lineno,
                    command: Command::AdvanceTick,
                });
            }
            other => return Err(bad(lineno, format!("unknown command {other}"))),
        }
    }
    policy.validate()?;
    Ok(ScenarioScript {
        seed,
        policy,
        steps,
    })
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

/// Symbolic name bindings accumulated while a script runs; persisted so
/// inspection commands can resolve names later.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct SymbolTable {
    pub users: BTreeMap<String, Address>,
    pub contracts: BTreeMap<String, ContractId>,
    pub manuscripts: BTreeMap<String, ManuscriptId>,
}

impl SymbolTable {
    pub fn user(&self, name: &str) -> Result<Address> {
        self.users
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownAddress(name.to_string()))
    }

    pub fn contract(&self, name: &str) -> Result<ContractId> {
        self.contracts
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownContract(name.to_string()))
    }

    pub fn manuscript(&self, name: &str) -> Result<ManuscriptId> {
        self.manuscripts
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownManuscript(name.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ScenarioRunner {
    pub engine: Engine,
    pub symbols: SymbolTable,
    pub steps_applied: usize,
}

impl ScenarioRunner {
    pub fn new(script: &ScenarioScript) -> Result<ScenarioRunner> {
        let engine = Engine::new(script.seed, script.policy.clone())?;
        let mut symbols = SymbolTable::default();
        symbols.users.insert("treasury".into(), engine.treasury());
        symbols.manuscripts.insert("genesis".into(), engine.genesis());
        Ok(ScenarioRunner {
            engine,
            symbols,
            steps_applied: 0,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn resolve_terms(
        &self,
        kind: ContractKind,
        covered: Option<Weight>,
        clawback: Option<Weight>,
        authorship: Option<&str>,
        venue: Option<&str>,
        k_override: Option<u32>,
        whitelist: Option<&[String]>,
    ) -> Result<ContractTerms> {
        let zero = Weight::new(0, 1);
        Ok(match kind {
            ContractKind::Authorship => ContractTerms::Authorship,
            ContractKind::Review => ContractTerms::Review,
            ContractKind::Funding => ContractTerms::Funding {
                covered_fraction: covered.unwrap_or(zero),
                clawback_share: clawback.unwrap_or(zero),
                authorship: self
                    .symbols
                    .contract(authorship.ok_or_else(|| {
                        Error::StateMismatch("funding needs authorship=".into())
                    })?)?,
            },
            ContractKind::Indexing => {
                let reviewer_whitelist = match whitelist {
                    Some(names) => Some(
                        names
                            .iter()
                            .map(|n| self.symbols.user(n))
                            .collect::<Result<Vec<Address>>>()?,
                    ),
                    None => None,
                };
                ContractTerms::Indexing {
                    venue: venue.unwrap_or("").to_string(),
                    k_override,
                    reviewer_whitelist,
                    clawback_share: clawback.unwrap_or(zero),
                    authorship: match authorship {
                        Some(a) => Some(self.symbols.contract(a)?),
                        None => None,
                    },
                }
            }
        })
    }

    pub fn apply(&mut self, step: &ScriptStep) -> Result<()> {
        match &step.command {
            Command::CreateUser { name, profile } => {
                let addr = self.engine.create_user(profile.clone())?;
                self.symbols.users.insert(name.clone(), addr);
            }
            Command::ProposeContract {
                name,
                kind,
                parties,
                shares,
                stake,
                manuscript,
                covered,
                clawback,
                authorship,
                venue,
                k_override,
                whitelist,
            } => {
                let party_addrs: Vec<Address> = parties
                    .iter()
                    .map(|p| self.symbols.user(p))
                    .collect::<Result<_>>()?;
                let weights = match shares {
                    Some(ws) => ws.clone(),
                    None => {
                        vec![Weight::new(1, party_addrs.len() as u64); party_addrs.len()]
                    }
                };
                if weights.len() != party_addrs.len() {
                    return Err(Error::InvalidShares(
                        "share count does not match party count".into(),
                    ));
                }
                let table = ShareTable {
                    entries: party_addrs.iter().copied().zip(weights).collect(),
                };
                let stake_required = TokenAmount(stake.unwrap_or(match kind {
                    ContractKind::Authorship => self.engine.policy().author_stake.grains(),
                    ContractKind::Review => self.engine.policy().reviewer_stake.grains(),
                    _ => 0,
                }));
                let terms = self.resolve_terms(
                    *kind,
                    *covered,
                    *clawback,
                    authorship.as_deref(),
                    venue.as_deref(),
                    *k_override,
                    whitelist.as_deref(),
                )?;
                let manuscript_key = match manuscript {
                    Some(m) => Some(self.symbols.manuscript(m)?),
                    None => None,
                };
                let id = self.engine.propose_contract(
                    *kind,
                    party_addrs,
                    table,
                    stake_required,
                    terms,
                    manuscript_key,
                )?;
                self.symbols.contracts.insert(name.clone(), id);
            }
            Command::SignContract { contract, party } => {
                let id = self.symbols.contract(contract)?;
                let addr = self.symbols.user(party)?;
                self.engine.sign_contract(&id, &addr)?;
            }
            Command::CancelContract { contract, by } => {
                let id = self.symbols.contract(contract)?;
                let quorum: Vec<Address> = by
                    .iter()
                    .map(|u| self.symbols.user(u))
                    .collect::<Result<_>>()?;
                self.engine.cancel_contract(&id, &quorum)?;
            }
            Command::Submit {
                name,
                contract,
                content,
                citations,
            } => {
                let id = self.symbols.contract(contract)?;
                let refs: BTreeSet<ManuscriptId> = citations
                    .iter()
                    .map(|c| self.symbols.manuscript(c))
                    .collect::<Result<_>>()?;
                let key =
                    self.engine
                        .submit_manuscript(&id, sha256(content.as_bytes()), &refs)?;
                self.symbols.manuscripts.insert(name.clone(), key);
            }
            Command::Revise {
                manuscript,
                content,
                citations,
                authors,
                shares,
            } => {
                let key = self.symbols.manuscript(manuscript)?;
                let refs = match citations {
                    Some(cs) => Some(
                        cs.iter()
                            .map(|c| self.symbols.manuscript(c))
                            .collect::<Result<BTreeSet<ManuscriptId>>>()?,
                    ),
                    None => None,
                };
                let updated_authorship = match authors {
                    Some(names) => {
                        let addrs: Vec<Address> = names
                            .iter()
                            .map(|n| self.symbols.user(n))
                            .collect::<Result<_>>()?;
                        let weights = match shares {
                            Some(ws) => ws.clone(),
                            None => vec![Weight::new(1, addrs.len() as u64); addrs.len()],
                        };
                        if weights.len() != addrs.len() {
                            return Err(Error::InvalidShares(
                                "share count does not match author count".into(),
                            ));
                        }
                        Some(addrs.into_iter().zip(weights).collect())
                    }
                    None => None,
                };
                self.engine.revise_manuscript(
                    &key,
                    sha256(content.as_bytes()),
                    refs,
                    updated_authorship,
                )?;
            }
            Command::Review {
                manuscript,
                reviewer,
                verdict,
                report,
            } => {
                let key = self.symbols.manuscript(manuscript)?;
                let addr = self.symbols.user(reviewer)?;
                self.engine.review(&key, &addr, *verdict, report)?;
            }
            Command::AttachRemark {
                manuscript,
                agent,
                kind,
                stake,
                contract,
                terms,
            } => {
                let key = self.symbols.manuscript(manuscript)?;
                let addr = self.symbols.user(agent)?;
                let id = self.symbols.contract(contract)?;
                self.engine.attach_remark(
                    &key,
                    &addr,
                    *kind,
                    TokenAmount(*stake),
                    sha256(terms.as_bytes()),
                    &id,
                )?;
            }
            Command::Withdraw { manuscript } => {
                let key = self.symbols.manuscript(manuscript)?;
                self.engine.withdraw_manuscript(&key)?;
            }
            Command::AdvanceTick => {
                self.engine.advance_tick();
            }
        }
        self.steps_applied += 1;
        Ok(())
    }
}

/// Run every step; a failing step aborts with its index (the state up to
/// the previous step is intact in the returned error path).
pub fn run_script(script: &ScenarioScript) -> Result<ScenarioRunner> {
    run_prefix(script, script.steps.len())
}

/// Run only the first `n` steps, for crash-consistency checks.
pub fn run_prefix(script: &ScenarioScript, n: usize) -> Result<ScenarioRunner> {
    let mut runner = ScenarioRunner::new(script)?;
    for (index, step) in script.steps.iter().take(n).enumerate() {
        runner.apply(step).map_err(|e| Error::StepFailed {
            step: index,
            source: Box::new(e),
        })?;
    }
    Ok(runner)
}

// ---------------------------------------------------------------------------
// Report and artifacts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioReport {
    pub lines: Vec<String>,
    pub ledger_digest: Hash32,
    pub state_digest: Hash32,
}

pub fn render_report(runner: &ScenarioRunner) -> ScenarioReport {
    let engine = &runner.engine;
    let ledger_digest = engine.ledger().export_digest();
    let state_digest = engine.state_digest();
    let mut lines = vec![
        "report/v1".to_string(),
        format!("seed={}", engine.seed()),
        format!("tick={}", engine.tick()),
    ];
    for policy_line in engine.policy().render_lines() {
        lines.push(format!("policy.{policy_line}"));
    }
    lines.push(format!("users={}", runner.symbols.users.len()));
    for (name, addr) in &runner.symbols.users {
        let (spendable, escrowed) = engine
            .balance_of(addr)
            .unwrap_or((TokenAmount::ZERO, TokenAmount::ZERO));
        lines.push(format!(
            "balance name={name} address={addr} spendable={spendable} escrowed={escrowed}"
        ));
    }
    lines.push(format!("manuscripts={}", runner.symbols.manuscripts.len()));
    for (name, key) in &runner.symbols.manuscripts {
        if let Ok(node) = engine.graph().get(key) {
            lines.push(format!(
                "manuscript name={name} key={key} id={} state={} version={}",
                node.id,
                node.state.render(),
                node.meta.version
            ));
        }
    }
    lines.push(format!("settlements={}", engine.audit().len()));
    lines.push(format!("ledger_digest={ledger_digest}"));
    lines.push(format!("state_digest={state_digest}"));
    ScenarioReport {
        lines,
        ledger_digest,
        state_digest,
    }
}

/// Execute a script and write every artifact into `out_dir`:
/// `ledger.txt`, `graph-nodelink.txt`, `graph.dot`, `audit.txt`,
/// `report.txt`.
pub fn run_scenario(script: &ScenarioScript, out_dir: &Path) -> Result<(ScenarioRunner, ScenarioReport)> {
    let runner = run_script(script)?;
    let report = write_artifacts(&runner, out_dir)?;
    Ok((runner, report))
}

pub fn write_artifacts(runner: &ScenarioRunner, out_dir: &Path) -> Result<ScenarioReport> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    std::fs::create_dir_all(out_dir).map_err(io)?;
    let write = |name: &str, mut text: String| -> Result<()> {
        if !text.ends_with('\n') {
            text.push('\n');
        }
        std::fs::write(out_dir.join(name), text).map_err(io)
    };
    write(
        "ledger.txt",
        runner.engine.ledger().export_lines().join("\n"),
    )?;
    write(
        "graph-nodelink.txt",
        crate::export::graph_nodelink(&runner.engine).join("\n"),
    )?;
    write("graph.dot", crate::export::graph_dot(&runner.engine).join("\n"))?;
    write("audit.txt", crate::export::audit_log(&runner.engine).join("\n"))?;
    let report = render_report(runner);
    write("report.txt", report.lines.join("\n"))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_handles_quotes_and_comments() {
        let tokens = tokenize(r#"review m1 carol confirm "looks good" # praise"#, 1).unwrap();
        assert_eq!(tokens, vec!["review", "m1", "carol", "confirm", "looks good"]);
        let tokens = tokenize(r#"create-user a name="A \"B\"""#, 1).unwrap();
        assert_eq!(tokens[2], r#"name=A "B""#);
        assert!(tokenize(r#"bad "unterminated"#, 3).is_err());
    }

    #[test]
    fn empty_script_runs_to_genesis_only_state() {
        let script = parse_script("seed 7\n").unwrap();
        let runner = run_script(&script).unwrap();
        assert_eq!(runner.engine.graph().len(), 1);
        let report = render_report(&runner);
        assert!(report.lines.iter().any(|l| l == "manuscripts=1"));
        assert!(runner.engine.verify_all().ok);
    }

    #[test]
    fn parse_error_carries_line_number() {
        let err = parse_script("seed 1\nnope arg\n").unwrap_err();
        assert!(matches!(err, Error::ParseError { line: 2, .. }));
        // forward reference is a parse error too
        let err = parse_script("sign-contract c1 alice\n").unwrap_err();
        assert!(matches!(err, Error::ParseError { line: 1, .. }));
    }

    #[test]
    fn same_script_same_digest() {
        let text = r#"
seed 42
create-user alice keywords=chain roles=author
create-user bob roles=author
create-user carol opt-in=yes
create-user dave opt-in=yes
propose-contract c1 authorship parties=alice,bob shares=3/5,2/5 stake=100
sign-contract c1 alice
sign-contract c1 bob
submit m1 contract=c1 content="hello" citations=genesis
propose-contract r1 review parties=carol manuscript=m1
sign-contract r1 carol
propose-contract r2 review parties=dave manuscript=m1
sign-contract r2 dave
review m1 carol confirm "fine"
review m1 dave confirm "ok"
"#;
        let script = parse_script(text).unwrap();
        let a = run_script(&script).unwrap();
        let b = run_script(&script).unwrap();
        assert_eq!(
            a.engine.ledger().export_digest(),
            b.engine.ledger().export_digest()
        );
        assert_eq!(a.engine.state_digest(), b.engine.state_digest());
        // the two confirms settled the manuscript
        let key = a.symbols.manuscript("m1").unwrap();
        assert_eq!(
            a.engine.graph().get(&key).unwrap().state,
            crate::graph::NodeState::Confirmed
        );
        assert_eq!(a.engine.audit().len(), 1);
        assert!(a.engine.verify_all().ok);
    }

    #[test]
    fn revise_can_change_authors_from_script() {
        let text = r#"
seed 3
create-user alice roles=author
create-user bob roles=author
propose-contract c1 authorship parties=alice stake=100
sign-contract c1 alice
submit m1 contract=c1 content="v1" citations=genesis
revise m1 content="v2" authors=alice,bob shares=3/5,2/5
"#;
        let runner = run_script(&parse_script(text).unwrap()).unwrap();
        let key = runner.symbols.manuscript("m1").unwrap();
        let node = runner.engine.graph().get(&key).unwrap();
        assert_eq!(node.meta.version, 2);
        assert_eq!(node.authorship.authors.len(), 2);
        assert!(runner.engine.verify_all().ok);
    }

    #[test]
    fn failing_step_reports_index() {
        let text = r#"
seed 1
create-user alice roles=author
propose-contract c1 authorship parties=alice stake=100
submit m1 contract=c1 content="x" citations=genesis
"#;
        // contract never signed: submit (step index 2) fails
        let script = parse_script(text).unwrap();
        let err = run_script(&script).unwrap_err();
        match err {
            Error::StepFailed { step, source } => {
                assert_eq!(step, 2);
                assert!(matches!(*source, Error::MissingSignature(_)));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn prefix_run_matches_full_run_prefix_digest() {
        let text = r#"
seed 9
create-user alice roles=author
create-user carol opt-in=yes
propose-contract c1 authorship parties=alice stake=100
sign-contract c1 alice
submit m1 contract=c1 content="x" citations=genesis
advance-tick
"#;
        let script = parse_script(text).unwrap();
        for n in 0..=script.steps.len() {
            let once = run_prefix(&script, n).unwrap();
            let twice = run_prefix(&script, n).unwrap();
            assert_eq!(once.engine.state_digest(), twice.engine.state_digest());
        }
    }
}
