//! Publication graph: content-addressed manuscript nodes with the four
//! components (authorship, confirmations, remarks, metadata), citation
//! edges and the Genesis Manuscript.
//!
//! A node's hash covers every component including the stored signatures,
//! so it changes whenever anything changes — each review or remark yields
//! a new hash, and the hash a manuscript carries once confirmed is frozen
//! forever and acts as its DOI. Nodes are keyed internally by their stable
//! version-1 base hash; citations record the cited node's confirmed hash.
//!
//! Signatures of private keys are never hashed: where the source material
//! speaks of building the hash from participants' private keys, this
//! implementation binds their *signatures* into the hash instead, which
//! preserves the tamper-evidence intent without leaking key material.

use crate::amount::{weight_to_string, TokenAmount, Weight};
use crate::contracts::ContractId;
use crate::crypto::{Address, CanonicalWriter, Hash32};
use crate::errors::{Error, Result};
use crate::ledger::Tick;
use crate::merkle::merkle_root;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ManuscriptId(pub Hash32);

impl fmt::Debug for ManuscriptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ManuscriptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct AuthorshipComponent {
    /// Ordered authors with contribution shares summing to exactly 1.
    /// Empty only on the genesis node.
    pub authors: Vec<(Address, Weight)>,
    pub author_stake: TokenAmount,
    pub authorship_contract: Option<ContractId>,
    /// Current-version signatures, one per listed author.
    pub signatures: BTreeMap<Address, Vec<u8>>,
}

impl AuthorshipComponent {
    pub fn author_addresses(&self) -> Vec<Address> {
        self.authors.iter().map(|(a, _)| *a).collect()
    }

    pub fn is_author(&self, addr: &Address) -> bool {
        self.authors.iter().any(|(a, _)| a == addr)
    }

    fn validate_shares(&self) -> Result<()> {
        if self.authors.is_empty() {
            return Err(Error::MalformedComponent("no authors".into()));
        }
        if self.authors.iter().any(|(_, w)| *w.numer() == 0) {
            return Err(Error::InvalidShares("zero author share".into()));
        }
        let mut addrs: Vec<&Address> = self.authors.iter().map(|(a, _)| a).collect();
        addrs.sort();
        addrs.dedup();
        if addrs.len() != self.authors.len() {
            return Err(Error::InvalidShares("duplicate author".into()));
        }
        let sum: Weight = self.authors.iter().map(|(_, w)| *w).sum();
        if sum != Weight::from_integer(1) {
            return Err(Error::SharesDontSumToOne);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Confirm,
    Revise,
}

impl Verdict {
    pub fn render(&self) -> &'static str {
        match self {
            Verdict::Confirm => "confirm",
            Verdict::Revise => "revise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub reviewer: Address,
    pub review_contract: ContractId,
    pub stake: TokenAmount,
    pub report: String,
    pub verdict: Verdict,
    pub version_signed: u32,
    #[serde(with = "crate::ledger::hex_bytes")]
    pub signature: Vec<u8>,
}

/// Payload a reviewer signs: the base hash of the version they reviewed,
/// plus their report and verdict.
pub fn review_sign_payload(version_base: &Hash32, report: &str, verdict: Verdict) -> Vec<u8> {
    let mut w = CanonicalWriter::new("peerchain.review-signature");
    w.field_hash("base", version_base)
        .field_str("report", report)
        .field_str("verdict", verdict.render());
    w.into_bytes()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ConfirmationComponent {
    /// Append-only review history across all versions.
    pub records: Vec<ReviewRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RemarkKind {
    Funding,
    Proofreading,
    Indexing,
    Other,
}

impl RemarkKind {
    pub fn parse(s: &str) -> Option<RemarkKind> {
        match s {
            "funding" => Some(RemarkKind::Funding),
            "proofreading" => Some(RemarkKind::Proofreading),
            "indexing" => Some(RemarkKind::Indexing),
            "other" => Some(RemarkKind::Other),
            _ => None,
        }
    }

    pub fn render(&self) -> &'static str {
        match self {
            RemarkKind::Funding => "funding",
            RemarkKind::Proofreading => "proofreading",
            RemarkKind::Indexing => "indexing",
            RemarkKind::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemarkEntry {
    pub agent: Address,
    pub kind: RemarkKind,
    pub contract: ContractId,
    pub stake: TokenAmount,
    pub terms_digest: Hash32,
    #[serde(with = "crate::ledger::hex_bytes")]
    pub signature: Vec<u8>,
}

/// Payload a remark agent signs when attaching a stake to a manuscript.
pub fn remark_sign_payload(
    manuscript_key: &ManuscriptId,
    agent: &Address,
    kind: RemarkKind,
    contract: &ContractId,
    stake: TokenAmount,
    terms_digest: &Hash32,
) -> Vec<u8> {
    let mut w = CanonicalWriter::new("peerchain.remark-signature");
    w.field_bytes("agent", &agent.0)
        .field_hash("contract", &contract.0)
        .field_str("kind", kind.render())
        .field_hash("manuscript", &manuscript_key.0)
        .field_u64("stake", stake.grains())
        .field_hash("terms", terms_digest);
    w.into_bytes()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManuscriptMeta {
    /// Starts at 1 and increments by one per revision.
    pub version: u32,
    pub timestamp: Tick,
    pub citation_merkle_root: Hash32,
    pub content_digest: Hash32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeState {
    UnderReview,
    Confirmed,
    Withdrawn,
}

impl NodeState {
    pub fn render(&self) -> &'static str {
        match self {
            NodeState::UnderReview => "under-review",
            NodeState::Confirmed => "confirmed",
            NodeState::Withdrawn => "withdrawn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManuscriptNode {
    /// Stable handle: the base hash of version 1. Never changes.
    pub key: ManuscriptId,
    /// Current content hash over all components and signatures; changes
    /// with every mutation and is frozen at confirmation.
    pub id: ManuscriptId,
    pub authorship: AuthorshipComponent,
    pub confirmations: ConfirmationComponent,
    pub remarks: Vec<RemarkEntry>,
    pub meta: ManuscriptMeta,
    /// Confirmed hashes of the cited manuscripts.
    pub citations: BTreeSet<ManuscriptId>,
    pub state: NodeState,
    /// Base hash per version: the node's hash right after the submit or
    /// revision that opened that version, before any reviews or remarks.
    /// Review signatures bind to these.
    pub version_bases: Vec<Hash32>,
    pub is_genesis: bool,
}

impl ManuscriptNode {
    /// Canonical content hash over the four components, the citation set
    /// and the version base trail. Node state is bookkeeping, not content,
    /// so confirmation freezes the hash rather than changing it.
    pub fn canonical_hash(&self) -> Result<ManuscriptId> {
        if !self.is_genesis {
            self.authorship.validate_shares()?;
        }
        // a node being hashed either carries one base per version, or is
        // mid-opening of a new version whose base this very hash becomes
        let bases = self.version_bases.len();
        let version = self.meta.version as usize;
        if bases != version && bases + 1 != version {
            return Err(Error::MalformedComponent(format!(
                "version {} with {} base hashes",
                self.meta.version, bases
            )));
        }
        let mut w = CanonicalWriter::new("peerchain.manuscript");
        // fields in lexicographic order of field name
        w.field_list(
            "authorship.authors",
            &self.authorship.authors,
            |w, name, (a, share)| {
                w.field_bytes(&format!("{name}.addr"), &a.0)
                    .field_str(&format!("{name}.share"), &weight_to_string(share));
            },
        );
        w.field_hash(
            "authorship.contract",
            &self
                .authorship
                .authorship_contract
                .map(|c| c.0)
                .unwrap_or(Hash32::ZERO),
        );
        let sigs: Vec<(Address, Vec<u8>)> = self
            .authorship
            .signatures
            .iter()
            .map(|(a, s)| (*a, s.clone()))
            .collect();
        w.field_list("authorship.signatures", &sigs, |w, name, (a, s)| {
            w.field_bytes(&format!("{name}.addr"), &a.0)
                .field_bytes(&format!("{name}.sig"), s);
        });
        w.field_u64("authorship.stake", self.authorship.author_stake.grains());
        let citations: Vec<ManuscriptId> = self.citations.iter().copied().collect();
        w.field_list("citations", &citations, |w, name, c| {
            w.field_hash(name, &c.0);
        });
        w.field_list(
            "confirmations",
            &self.confirmations.records,
            |w, name, r| {
                w.field_hash(&format!("{name}.contract"), &r.review_contract.0)
                    .field_str(&format!("{name}.report"), &r.report)
                    .field_bytes(&format!("{name}.reviewer"), &r.reviewer.0)
                    .field_bytes(&format!("{name}.sig"), &r.signature)
                    .field_u64(&format!("{name}.stake"), r.stake.grains())
                    .field_str(&format!("{name}.verdict"), r.verdict.render())
                    .field_u64(&format!("{name}.version"), r.version_signed as u64);
            },
        );
        w.field_u64("genesis", self.is_genesis as u64);
        w.field_hash("meta.content_digest", &self.meta.content_digest);
        w.field_hash("meta.merkle_root", &self.meta.citation_merkle_root);
        w.field_u64("meta.timestamp", self.meta.timestamp);
        w.field_u64("meta.version", self.meta.version as u64);
        w.field_list("remarks", &self.remarks, |w, name, r| {
            w.field_bytes(&format!("{name}.agent"), &r.agent.0)
                .field_hash(&format!("{name}.contract"), &r.contract.0)
                .field_str(&format!("{name}.kind"), r.kind.render())
                .field_bytes(&format!("{name}.sig"), &r.signature)
                .field_u64(&format!("{name}.stake"), r.stake.grains())
                .field_hash(&format!("{name}.terms"), &r.terms_digest);
        });
        w.field_list("version_bases", &self.version_bases, |w, name, b| {
            w.field_hash(name, b);
        });
        Ok(ManuscriptId(w.finish()))
    }

    /// Base hash of the version currently open.
    pub fn current_version_base(&self) -> Hash32 {
        self.version_bases[self.meta.version as usize - 1]
    }

    fn rehash(&mut self) -> Result<()> {
        self.id = self.canonical_hash()?;
        Ok(())
    }
}

/// Payload authors sign for the current version of a manuscript: shares,
/// stake, content and citations.
pub fn authorship_sign_payload(
    authors: &[(Address, Weight)],
    author_stake: TokenAmount,
    contract: &ContractId,
    content_digest: &Hash32,
    citations: &BTreeSet<ManuscriptId>,
    version: u32,
) -> Vec<u8> {
    let mut w = CanonicalWriter::new("peerchain.authorship-signature");
    w.field_list("authors", authors, |w, name, (a, share)| {
        w.field_bytes(&format!("{name}.addr"), &a.0)
            .field_str(&format!("{name}.share"), &weight_to_string(share));
    });
    let citations: Vec<ManuscriptId> = citations.iter().copied().collect();
    w.field_list("citations", &citations, |w, name, c| {
        w.field_hash(name, &c.0);
    });
    w.field_hash("content", content_digest)
        .field_hash("contract", &contract.0)
        .field_u64("stake", author_stake.grains())
        .field_u64("version", version as u64);
    w.into_bytes()
}

/// Payload authors sign to withdraw a manuscript.
pub fn withdrawal_sign_payload(key: &ManuscriptId, version: u32) -> Vec<u8> {
    let mut w = CanonicalWriter::new("peerchain.withdrawal-signature");
    w.field_hash("manuscript", &key.0)
        .field_u64("version", version as u64);
    w.into_bytes()
}

/// Everything submit needs, assembled and signature-verified by the engine.
#[derive(Debug, Clone)]
pub struct SubmitRequest {
    pub authors: Vec<(Address, Weight)>,
    pub author_stake: TokenAmount,
    pub authorship_contract: ContractId,
    pub content_digest: Hash32,
    pub citations: BTreeSet<ManuscriptId>,
    pub signatures: BTreeMap<Address, Vec<u8>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq, Eq)]
pub struct PublicationGraph {
    nodes: BTreeMap<ManuscriptId, ManuscriptNode>,
    /// Current hash -> stable key.
    current_index: BTreeMap<ManuscriptId, ManuscriptId>,
    genesis: Option<ManuscriptId>,
}

impl PublicationGraph {
    /// Initialize the genesis manuscript: empty citations, no stakes,
    /// born Confirmed. It receives citation inflows but never settles
    /// outward. Callable exactly once.
    pub fn init_genesis(&mut self, content_digest: Hash32, now: Tick) -> Result<ManuscriptId> {
        if self.genesis.is_some() {
            return Err(Error::GenesisExists);
        }
        let mut node = ManuscriptNode {
            key: ManuscriptId::default(),
            id: ManuscriptId::default(),
            authorship: AuthorshipComponent::default(),
            confirmations: ConfirmationComponent::default(),
            remarks: Vec::new(),
            meta: ManuscriptMeta {
                version: 1,
                timestamp: now,
                citation_merkle_root: merkle_root([]),
                content_digest,
            },
            citations: BTreeSet::new(),
            state: NodeState::Confirmed,
            version_bases: Vec::new(),
            is_genesis: true,
        };
        let base = node.canonical_hash()?;
        node.key = base;
        node.version_bases.push(base.0);
        node.rehash()?;
        let key = node.key;
        self.current_index.insert(node.id, key);
        self.nodes.insert(key, node);
        self.genesis = Some(key);
        Ok(key)
    }

    pub fn genesis_key(&self) -> Option<ManuscriptId> {
        self.genesis
    }

    /// Look a node up by stable key or by current hash.
    pub fn resolve(&self, id: &ManuscriptId) -> Option<&ManuscriptNode> {
        self.nodes
            .get(id)
            .or_else(|| self.current_index.get(id).and_then(|k| self.nodes.get(k)))
    }

    pub fn get(&self, key: &ManuscriptId) -> Result<&ManuscriptNode> {
        self.resolve(key)
            .ok_or_else(|| Error::UnknownManuscript(key.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ManuscriptNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn get_mut(&mut self, key: &ManuscriptId) -> Result<&mut ManuscriptNode> {
        let key = if self.nodes.contains_key(key) {
            *key
        } else {
            *self
                .current_index
                .get(key)
                .ok_or_else(|| Error::UnknownManuscript(key.to_string()))?
        };
        Ok(self.nodes.get_mut(&key).unwrap())
    }

    /// Re-index after a mutation changed a node's current hash.
    fn reindex(&mut self, key: &ManuscriptId, old_id: ManuscriptId) {
        let node = &self.nodes[key];
        self.current_index.remove(&old_id);
        self.current_index.insert(node.id, *key);
    }

    fn check_citations(&self, citations: &BTreeSet<ManuscriptId>) -> Result<()> {
        if citations.is_empty() {
            return Err(Error::MalformedComponent(
                "a manuscript must cite at least one confirmed node".into(),
            ));
        }
        for cited in citations {
            match self.resolve(cited) {
                Some(node) if node.state == NodeState::Confirmed => {}
                Some(_) => return Err(Error::UnconfirmedCitation(cited.to_string())),
                None => return Err(Error::UnknownManuscript(cited.to_string())),
            }
        }
        Ok(())
    }

    /// Map citation references (stable keys or hashes) to the confirmed
    /// hashes stored on the node. Authors sign over this canonical set, so
    /// it must be resolved before the authorship payload is built.
    pub fn resolve_citations(
        &self,
        refs: &BTreeSet<ManuscriptId>,
    ) -> Result<BTreeSet<ManuscriptId>> {
        self.check_citations(refs)?;
        Ok(refs.iter().map(|c| self.resolve(c).unwrap().id).collect())
    }

    /// Create a version-1 node under review. Citations must already be
    /// resolved via [`Self::resolve_citations`] (authors signed over that
    /// set); the engine has verified signatures and escrowed the stake.
    pub fn submit(&mut self, req: SubmitRequest, now: Tick) -> Result<ManuscriptId> {
        let citations = self.resolve_citations(&req.citations)?;
        if citations != req.citations {
            return Err(Error::MalformedComponent(
                "citations must be resolved confirmed hashes".into(),
            ));
        }
        for (addr, _) in &req.authors {
            if !req.signatures.contains_key(addr) {
                return Err(Error::MissingSignature(addr.to_hex()));
            }
        }
        let mut node = ManuscriptNode {
            key: ManuscriptId::default(),
            id: ManuscriptId::default(),
            authorship: AuthorshipComponent {
                authors: req.authors,
                author_stake: req.author_stake,
                authorship_contract: Some(req.authorship_contract),
                signatures: req.signatures,
            },
            confirmations: ConfirmationComponent::default(),
            remarks: Vec::new(),
            meta: ManuscriptMeta {
                version: 1,
                timestamp: now,
                citation_merkle_root: merkle_root(citations.iter().map(|c| c.0)),
                content_digest: req.content_digest,
            },
            citations,
            state: NodeState::UnderReview,
            version_bases: Vec::new(),
            is_genesis: false,
        };
        let base = node.canonical_hash()?;
        node.key = base;
        node.version_bases.push(base.0);
        node.rehash()?;
        let key = node.key;
        if self.nodes.contains_key(&key) {
            return Err(Error::MalformedComponent("duplicate manuscript".into()));
        }
        self.current_index.insert(node.id, key);
        self.nodes.insert(key, node);
        Ok(key)
    }

    /// Open the next version: new content, optionally new citations and
    /// authorship. All (possibly new) authors must have signed the new
    /// version. Prior confirmations stay recorded but no longer count
    /// toward the tally, which is version-bound.
    pub fn revise(
        &mut self,
        key: &ManuscriptId,
        new_content_digest: Hash32,
        new_citations: Option<BTreeSet<ManuscriptId>>,
        updated_authorship: Option<Vec<(Address, Weight)>>,
        signatures: BTreeMap<Address, Vec<u8>>,
        now: Tick,
    ) -> Result<ManuscriptId> {
        let resolved_citations = match new_citations {
            Some(citations) => {
                let resolved = self.resolve_citations(&citations)?;
                if resolved != citations {
                    return Err(Error::MalformedComponent(
                        "citations must be resolved confirmed hashes".into(),
                    ));
                }
                Some(resolved)
            }
            None => None,
        };
        let node = self.get_mut(key)?;
        if node.state != NodeState::UnderReview {
            return Err(Error::LockedManuscript);
        }
        let old_id = node.id;
        if let Some(authors) = updated_authorship {
            node.authorship.authors = authors;
            node.authorship.validate_shares()?;
        }
        for (addr, _) in &node.authorship.authors {
            if !signatures.contains_key(addr) {
                return Err(Error::MissingSignature(addr.to_hex()));
            }
        }
        node.authorship.signatures = signatures;
        if let Some(citations) = resolved_citations {
            node.meta.citation_merkle_root = merkle_root(citations.iter().map(|c| c.0));
            node.citations = citations;
        }
        node.meta.content_digest = new_content_digest;
        node.meta.version += 1;
        node.meta.timestamp = now;
        let base = node.canonical_hash()?;
        node.version_bases.push(base.0);
        node.rehash()?;
        let key = node.key;
        self.reindex(&key, old_id);
        Ok(ManuscriptId(base.0))
    }

    /// Append a review record; contract and stake preconditions are the
    /// engine's responsibility, author exclusion and state are checked
    /// here.
    pub fn record_review(&mut self, key: &ManuscriptId, record: ReviewRecord) -> Result<()> {
        let node = self.get_mut(key)?;
        if node.state != NodeState::UnderReview {
            return Err(Error::NotUnderReview);
        }
        if node.authorship.is_author(&record.reviewer) {
            return Err(Error::ReviewerIsAuthor);
        }
        if record.version_signed != node.meta.version {
            return Err(Error::MalformedComponent(format!(
                "review signed for version {} but node is at {}",
                record.version_signed, node.meta.version
            )));
        }
        let old_id = node.id;
        node.confirmations.records.push(record);
        node.rehash()?;
        let key = node.key;
        self.reindex(&key, old_id);
        Ok(())
    }

    /// Attach a remark stake entry before lock.
    pub fn attach_remark(&mut self, key: &ManuscriptId, entry: RemarkEntry) -> Result<()> {
        let node = self.get_mut(key)?;
        if node.state != NodeState::UnderReview {
            return Err(Error::LockedManuscript);
        }
        if entry.stake.is_zero() {
            return Err(Error::ZeroStake);
        }
        let old_id = node.id;
        node.remarks.push(entry);
        node.rehash()?;
        let key = node.key;
        self.reindex(&key, old_id);
        Ok(())
    }

    /// Flip a node to Confirmed. Bookkeeping only: the hash is already
    /// fixed by the content the reviewers approved, and freezes here.
    pub fn mark_confirmed(&mut self, key: &ManuscriptId) -> Result<ManuscriptId> {
        let node = self.get_mut(key)?;
        if node.state != NodeState::UnderReview {
            return Err(Error::NotUnderReview);
        }
        node.state = NodeState::Confirmed;
        Ok(node.id)
    }

    /// Flip a node to Withdrawn; it can never be cited afterwards.
    pub fn mark_withdrawn(&mut self, key: &ManuscriptId) -> Result<()> {
        let node = self.get_mut(key)?;
        if node.state != NodeState::UnderReview {
            return Err(Error::LockedManuscript);
        }
        node.state = NodeState::Withdrawn;
        Ok(())
    }

    /// Keys of nodes citing the given node (edges point citing -> cited).
    pub fn citers_of(&self, key: &ManuscriptId) -> Vec<ManuscriptId> {
        let Some(target) = self.resolve(key) else {
            return Vec::new();
        };
        let target_id = target.id;
        self.nodes
            .values()
            .filter(|n| n.citations.contains(&target_id))
            .map(|n| n.key)
            .collect()
    }

    /// Integrity check of one node: hash recomputation, share sum, merkle
    /// root, signature validity (via the key resolver) and citation
    /// confirmed-ness.
    pub fn verify_node(
        &self,
        node: &ManuscriptNode,
        resolve_key: &dyn Fn(&Address) -> Option<[u8; 32]>,
    ) -> crate::ledger::VerifyReport {
        let mut report = crate::ledger::VerifyReport {
            ok: true,
            violations: Vec::new(),
        };
        let mut flag = |kind: &'static str, detail: String| {
            report.ok = false;
            report.violations.push(crate::ledger::Violation { kind, detail });
        };
        match node.canonical_hash() {
            Ok(recomputed) => {
                if recomputed != node.id {
                    flag(
                        "node-hash-mismatch",
                        format!("node {}: recomputed {}", node.id, recomputed),
                    );
                }
            }
            Err(e) => flag("node-malformed", format!("node {}: {e}", node.id)),
        }
        if !node.is_genesis {
            if let Err(e) = node.authorship.validate_shares() {
                flag("node-shares", format!("node {}: {e}", node.id));
            }
            let payload = authorship_sign_payload(
                &node.authorship.authors,
                node.authorship.author_stake,
                &node.authorship.authorship_contract.unwrap_or_default(),
                &node.meta.content_digest,
                &node.citations,
                node.meta.version,
            );
            for (addr, _) in &node.authorship.authors {
                match node.authorship.signatures.get(addr) {
                    None => flag("node-author-unsigned", format!("node {}: {addr}", node.id)),
                    Some(sig) => match resolve_key(addr) {
                        Some(key) => {
                            if !crate::crypto::verify_signature(&key, &payload, sig) {
                                flag(
                                    "node-author-bad-signature",
                                    format!("node {}: {addr}", node.id),
                                );
                            }
                        }
                        None => flag("node-unknown-author", format!("node {}: {addr}", node.id)),
                    },
                }
            }
        }
        let expected_root = merkle_root(node.citations.iter().map(|c| c.0));
        if expected_root != node.meta.citation_merkle_root {
            flag("node-merkle-mismatch", format!("node {}", node.id));
        }
        if node.version_bases.len() != node.meta.version as usize {
            flag("node-version-trail", format!("node {}", node.id));
        }
        for (i, record) in node.confirmations.records.iter().enumerate() {
            let base_index = record.version_signed as usize;
            if base_index == 0 || base_index > node.version_bases.len() {
                flag(
                    "node-review-version",
                    format!("node {} record {i}: version {}", node.id, record.version_signed),
                );
                continue;
            }
            let payload = review_sign_payload(
                &node.version_bases[base_index - 1],
                &record.report,
                record.verdict,
            );
            match resolve_key(&record.reviewer) {
                Some(key) => {
                    if !crate::crypto::verify_signature(&key, &payload, &record.signature) {
                        flag(
                            "node-review-bad-signature",
                            format!("node {} record {i}", node.id),
                        );
                    }
                }
                None => flag(
                    "node-unknown-reviewer",
                    format!("node {} record {i}", node.id),
                ),
            }
            if node.authorship.is_author(&record.reviewer) {
                flag("node-self-review", format!("node {} record {i}", node.id));
            }
        }
        for (i, remark) in node.remarks.iter().enumerate() {
            let payload = remark_sign_payload(
                &node.key,
                &remark.agent,
                remark.kind,
                &remark.contract,
                remark.stake,
                &remark.terms_digest,
            );
            match resolve_key(&remark.agent) {
                Some(key) => {
                    if !crate::crypto::verify_signature(&key, &payload, &remark.signature) {
                        flag(
                            "node-remark-bad-signature",
                            format!("node {} remark {i}", node.id),
                        );
                    }
                }
                None => flag("node-unknown-agent", format!("node {} remark {i}", node.id)),
            }
            if remark.stake.is_zero() {
                flag("node-remark-zero-stake", format!("node {} remark {i}", node.id));
            }
        }
        for cited in &node.citations {
            match self.resolve(cited) {
                Some(target) if target.state == NodeState::Confirmed => {}
                Some(_) => flag(
                    "node-unconfirmed-citation",
                    format!("node {} cites {}", node.id, cited),
                ),
                None => flag(
                    "node-dangling-citation",
                    format!("node {} cites {}", node.id, cited),
                ),
            }
        }
        report
    }

    /// Whole-graph check: every node, genesis shape, and acyclicity by
    /// Kahn's topological sort over citation edges.
    pub fn verify_graph(
        &self,
        resolve_key: &dyn Fn(&Address) -> Option<[u8; 32]>,
    ) -> crate::ledger::VerifyReport {
        let mut report = crate::ledger::VerifyReport {
            ok: true,
            violations: Vec::new(),
        };
        for node in self.nodes.values() {
            let sub = self.verify_node(node, resolve_key);
            if !sub.ok {
                report.ok = false;
                report.violations.extend(sub.violations);
            }
        }
        if let Some(genesis) = &self.genesis {
            let g = &self.nodes[genesis];
            if !g.citations.is_empty() || g.state != NodeState::Confirmed || !g.is_genesis {
                report.ok = false;
                report.violations.push(crate::ledger::Violation {
                    kind: "genesis-shape",
                    detail: "genesis node malformed".into(),
                });
            }
        }
        // Kahn's algorithm over citing -> cited edges
        let mut out_degree: BTreeMap<ManuscriptId, usize> = BTreeMap::new();
        let mut citers: BTreeMap<ManuscriptId, Vec<ManuscriptId>> = BTreeMap::new();
        for node in self.nodes.values() {
            let mut degree = 0;
            for cited in &node.citations {
                if let Some(target) = self.resolve(cited) {
                    citers.entry(target.key).or_default().push(node.key);
                    degree += 1;
                }
            }
            out_degree.insert(node.key, degree);
        }
        let mut queue: Vec<ManuscriptId> = out_degree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(k, _)| *k)
            .collect();
        let mut removed = 0;
        while let Some(k) = queue.pop() {
            removed += 1;
            for citer in citers.get(&k).cloned().unwrap_or_default() {
                let d = out_degree.get_mut(&citer).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(citer);
                }
            }
        }
        if removed != self.nodes.len() {
            report.ok = false;
            report.violations.push(crate::ledger::Violation {
                kind: "graph-cycle",
                detail: "citation edges contain a cycle".into(),
            });
        }
        report
    }

    #[doc(hidden)]
    pub fn tamper_node(&mut self, key: &ManuscriptId, mutate: impl FnOnce(&mut ManuscriptNode)) {
        let key = *self.current_index.get(key).unwrap_or(key);
        mutate(self.nodes.get_mut(&key).unwrap());
    }
}
