//! Cross-module lifecycle flows driven through the engine.

use peerchain_core::amount::Weight;
use peerchain_core::contracts::{ContractId, ContractKind, ContractState, ContractTerms, ShareTable};
use peerchain_core::crypto::sha256;
use peerchain_core::engine::Engine;
use peerchain_core::errors::Error;
use peerchain_core::graph::{ManuscriptId, NodeState, RemarkKind, Verdict};
use peerchain_core::identity::{Profile, Role};
use peerchain_core::policy::PolicyConfig;
use peerchain_core::{Address, TokenAmount};
use std::collections::{BTreeMap, BTreeSet};

fn profile(name: &str, keywords: &[&str], opt_in: bool) -> Profile {
    Profile {
        display_name: name.to_string(),
        keywords: keywords.iter().map(|s| s.to_string()).collect(),
        scholar_ids: BTreeMap::from([("orcid".to_string(), format!("0000-{name}"))]),
        roles: BTreeSet::from([Role::Author]),
        reviewer_opt_in: opt_in,
    }
}

struct World {
    engine: Engine,
}

impl World {
    fn new() -> World {
        World {
            engine: Engine::new(4242, PolicyConfig::default()).unwrap(),
        }
    }

    fn user(&mut self, name: &str, opt_in: bool) -> Address {
        self.engine.create_user(profile(name, &["blockchain"], opt_in)).unwrap()
    }

    fn authorship(&mut self, authors: &[(Address, Weight)], stake: u64) -> ContractId {
        let id = self
            .engine
            .propose_contract(
                ContractKind::Authorship,
                authors.iter().map(|(a, _)| *a).collect(),
                ShareTable {
                    entries: authors.to_vec(),
                },
                TokenAmount(stake),
                ContractTerms::Authorship,
                None,
            )
            .unwrap();
        for (a, _) in authors {
            self.engine.sign_contract(&id, a).unwrap();
        }
        id
    }

    fn submit(&mut self, contract: &ContractId, tag: &str, cites: &[ManuscriptId]) -> ManuscriptId {
        self.engine
            .submit_manuscript(contract, sha256(tag.as_bytes()), &cites.iter().copied().collect())
            .unwrap()
    }

    fn reviewer_contract(&mut self, m: &ManuscriptId, reviewer: &Address) -> ContractId {
        let id = self
            .engine
            .propose_contract(
                ContractKind::Review,
                vec![*reviewer],
                ShareTable::single(*reviewer),
                self.engine.policy().reviewer_stake,
                ContractTerms::Review,
                Some(*m),
            )
            .unwrap();
        self.engine.sign_contract(&id, reviewer).unwrap();
        id
    }
}

#[test]
fn full_balance_accounting_through_confirmation() {
    let mut w = World::new();
    let alice = w.user("alice", false);
    let bob = w.user("bob", false);
    let carol = w.user("carol", true);
    let dave = w.user("dave", true);
    let genesis = w.engine.genesis();

    let c1 = w.authorship(&[(alice, Weight::new(3, 5)), (bob, Weight::new(2, 5))], 100);
    let m1 = w.submit(&c1, "m1", &[genesis]);
    // stakes escrowed per shares
    assert_eq!(w.engine.balance_of(&alice).unwrap(), (TokenAmount(70), TokenAmount(60)));
    assert_eq!(w.engine.balance_of(&bob).unwrap(), (TokenAmount(90), TokenAmount(40)));

    w.reviewer_contract(&m1, &carol);
    w.reviewer_contract(&m1, &dave);
    assert_eq!(w.engine.balance_of(&carol).unwrap(), (TokenAmount(120), TokenAmount(10)));

    assert!(!w.engine.review(&m1, &carol, Verdict::Confirm, "ok").unwrap());
    let confirmed = w.engine.review(&m1, &dave, Verdict::Confirm, "ok").unwrap();
    assert!(confirmed);
    let node = w.engine.graph().get(&m1).unwrap();
    assert_eq!(node.state, NodeState::Confirmed);

    // whole pool (100 + 10 + 10) went to genesis, hence to the treasury
    let report = &w.engine.audit()[0];
    assert_eq!(report.pool, TokenAmount(120));
    assert_eq!(report.per_citation, vec![(genesis, TokenAmount(120))]);
    // escrows empty again
    assert_eq!(w.engine.balance_of(&alice).unwrap().1, TokenAmount::ZERO);
    assert_eq!(w.engine.balance_of(&carol).unwrap().1, TokenAmount::ZERO);
    assert!(w.engine.conservation_holds());
    assert!(w.engine.verify_all().ok);
}

#[test]
fn funding_covers_half_the_author_stake() {
    let mut w = World::new();
    let alice = w.user("alice", false);
    let funder = w.user("funder", false);
    let genesis = w.engine.genesis();

    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    let f1 = w
        .engine
        .propose_contract(
            ContractKind::Funding,
            vec![funder],
            ShareTable::single(funder),
            TokenAmount::ZERO,
            ContractTerms::Funding {
                covered_fraction: Weight::new(1, 2),
                clawback_share: Weight::new(1, 5),
                authorship: c1,
            },
            None,
        )
        .unwrap();
    w.engine.sign_contract(&f1, &funder).unwrap();
    let alice_before = w.engine.balance_of(&alice).unwrap().0;
    let funder_before = w.engine.balance_of(&funder).unwrap().0;
    w.submit(&c1, "m1", &[genesis]);
    // funder escrows 50, the author escrows the remaining 50
    assert_eq!(
        w.engine.balance_of(&funder).unwrap(),
        (funder_before - TokenAmount(50), TokenAmount(50))
    );
    assert_eq!(
        w.engine.balance_of(&alice).unwrap(),
        (alice_before - TokenAmount(50), TokenAmount(50))
    );
    assert_eq!(w.engine.registry().get(&f1).unwrap().state, ContractState::Active);
    assert!(w.engine.conservation_holds());
}

#[test]
fn cancel_active_review_refunds_stake_in_full() {
    let mut w = World::new();
    let alice = w.user("alice", false);
    let carol = w.user("carol", true);
    let genesis = w.engine.genesis();
    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    let m1 = w.submit(&c1, "m1", &[genesis]);
    let r1 = w.reviewer_contract(&m1, &carol);
    let (spendable, escrowed) = w.engine.balance_of(&carol).unwrap();
    assert_eq!(escrowed, TokenAmount(10));
    w.engine.cancel_contract(&r1, &[carol]).unwrap();
    assert_eq!(
        w.engine.balance_of(&carol).unwrap(),
        (spendable + TokenAmount(10), TokenAmount::ZERO)
    );
    assert_eq!(
        w.engine.registry().get(&r1).unwrap().state,
        ContractState::Cancelled
    );
    // the reviewer can no longer record under the cancelled contract
    let err = w.engine.review(&m1, &carol, Verdict::Confirm, "x").unwrap_err();
    assert_eq!(err, Error::NoReviewContract);
}

#[test]
fn review_then_cancel_is_refused() {
    let mut w = World::new();
    let alice = w.user("alice", false);
    let carol = w.user("carol", true);
    let genesis = w.engine.genesis();
    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    let m1 = w.submit(&c1, "m1", &[genesis]);
    let r1 = w.reviewer_contract(&m1, &carol);
    w.engine.review(&m1, &carol, Verdict::Revise, "needs work").unwrap();
    assert_eq!(
        w.engine.cancel_contract(&r1, &[carol]).unwrap_err(),
        Error::AlreadyLocked
    );
}

#[test]
fn indexing_override_outranks_policy_threshold() {
    let mut w = World::new();
    let alice = w.user("alice", false);
    let venue = w.user("venue", false);
    let r1 = w.user("rev1", true);
    let r2 = w.user("rev2", true);
    let r3 = w.user("rev3", true);
    let genesis = w.engine.genesis();
    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    let x1 = w
        .engine
        .propose_contract(
            ContractKind::Indexing,
            vec![venue],
            ShareTable::single(venue),
            TokenAmount::ZERO,
            ContractTerms::Indexing {
                venue: "special issue".into(),
                k_override: Some(3),
                reviewer_whitelist: None,
                clawback_share: Weight::new(0, 1),
                authorship: Some(c1),
            },
            None,
        )
        .unwrap();
    w.engine.sign_contract(&x1, &venue).unwrap();
    let m1 = w.submit(&c1, "m1", &[genesis]);

    for reviewer in [&r1, &r2] {
        w.reviewer_contract(&m1, reviewer);
        w.engine.review(&m1, reviewer, Verdict::Confirm, "ok").unwrap();
    }
    // policy K=2 satisfied but the indexing override demands 3
    assert_eq!(
        w.engine.graph().get(&m1).unwrap().state,
        NodeState::UnderReview
    );
    w.reviewer_contract(&m1, &r3);
    assert!(w.engine.review(&m1, &r3, Verdict::Confirm, "ok").unwrap());
}

#[test]
fn withdrawn_manuscript_cannot_be_cited_or_withdrawn_again() {
    let mut w = World::new();
    let alice = w.user("alice", false);
    let bob = w.user("bob", false);
    let genesis = w.engine.genesis();
    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    let m1 = w.submit(&c1, "m1", &[genesis]);
    let report = w.engine.withdraw_manuscript(&m1).unwrap();
    assert_eq!(report.pool, TokenAmount(100));
    // refund 50, treasury 50 under the default half refund
    assert_eq!(w.engine.balance_of(&alice).unwrap().0, TokenAmount(80));
    assert_eq!(
        w.engine.withdraw_manuscript(&m1).unwrap_err(),
        Error::LockedManuscript
    );
    let c2 = w.authorship(&[(bob, Weight::from_integer(1))], 100);
    let err = w
        .engine
        .submit_manuscript(&c2, sha256(b"m2"), &BTreeSet::from([m1]))
        .unwrap_err();
    assert!(matches!(err, Error::UnconfirmedCitation(_)));
}

#[test]
fn withdraw_confirmed_node_is_locked() {
    let mut w = World::new();
    let alice = w.user("alice", false);
    let carol = w.user("carol", true);
    let dave = w.user("dave", true);
    let genesis = w.engine.genesis();
    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    let m1 = w.submit(&c1, "m1", &[genesis]);
    w.reviewer_contract(&m1, &carol);
    w.reviewer_contract(&m1, &dave);
    w.engine.review(&m1, &carol, Verdict::Confirm, "ok").unwrap();
    w.engine.review(&m1, &dave, Verdict::Confirm, "ok").unwrap();
    assert_eq!(
        w.engine.withdraw_manuscript(&m1).unwrap_err(),
        Error::LockedManuscript
    );
}

#[test]
fn opting_out_excludes_reviewer_in_same_tick() {
    let mut w = World::new();
    let alice = w.user("alice", false);
    let carol = w.user("carol", true);
    let dave = w.user("dave", true);
    let genesis = w.engine.genesis();
    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    let m1 = w.submit(&c1, "m1", &[genesis]);
    let before = w.engine.select_reviewers(&m1).unwrap();
    assert!(before.contains(&carol) && before.contains(&dave));
    let mut updated = profile("carol", &["blockchain"], false);
    updated.reviewer_opt_in = false;
    w.engine.update_profile(&carol, updated).unwrap();
    let after = w.engine.select_reviewers(&m1).unwrap();
    assert!(!after.contains(&carol));
    assert!(after.contains(&dave));
}

#[test]
fn profile_update_grants_nothing() {
    let mut w = World::new();
    let alice = w.engine.create_user(Profile::default()).unwrap();
    assert_eq!(w.engine.balance_of(&alice).unwrap().0, TokenAmount(100));
    let richer = profile("alice", &["blockchain", "tokens"], true);
    w.engine.update_profile(&alice, richer).unwrap();
    assert_eq!(w.engine.balance_of(&alice).unwrap().0, TokenAmount(100));
}

#[test]
fn snapshots_read_concurrently_while_writer_advances() {
    let mut w = World::new();
    let alice = w.user("alice", false);
    let genesis = w.engine.genesis();
    let snapshot = w.engine.snapshot();
    let handle = std::thread::spawn(move || {
        // reads on the snapshot see the pre-mutation state
        let report = snapshot.verify_all();
        (snapshot.graph().len(), report.ok)
    });
    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    w.submit(&c1, "m1", &[genesis]);
    let (nodes_seen, ok) = handle.join().unwrap();
    assert_eq!(nodes_seen, 1);
    assert!(ok);
    assert_eq!(w.engine.graph().len(), 2);
}

#[test]
fn revision_can_rewrite_authorship_and_future_splits_follow() {
    let mut w = World::new();
    let alice = w.user("alice", false);
    let bob = w.user("bob", false);
    let carol = w.user("carol", true);
    let dave = w.user("dave", true);
    let citer = w.user("citer", false);
    let genesis = w.engine.genesis();
    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    let m1 = w.submit(&c1, "m1", &[genesis]);
    // v2 brings bob in with a 3/5-2/5 split; both must sign
    w.engine
        .revise_manuscript(
            &m1,
            sha256(b"m1v2"),
            None,
            Some(vec![(alice, Weight::new(3, 5)), (bob, Weight::new(2, 5))]),
        )
        .unwrap();
    let node = w.engine.graph().get(&m1).unwrap();
    assert_eq!(node.meta.version, 2);
    assert_eq!(node.authorship.authors.len(), 2);
    assert!(w.engine.verify_all().ok);
    // bob is an author now, so he cannot review
    w.reviewer_contract(&m1, &carol);
    w.reviewer_contract(&m1, &dave);
    let err = w.engine.review(&m1, &bob, Verdict::Confirm, "self").unwrap_err();
    assert_eq!(err, Error::ReviewerIsAuthor);
    w.engine.review(&m1, &carol, Verdict::Confirm, "ok").unwrap();
    w.engine.review(&m1, &dave, Verdict::Confirm, "ok").unwrap();

    // a citation of m1 splits the author class over the v2 shares
    let c2 = w.authorship(&[(citer, Weight::from_integer(1))], 100);
    let m2 = w.submit(&c2, "m2", &[m1]);
    w.reviewer_contract(&m2, &carol);
    w.reviewer_contract(&m2, &dave);
    w.engine.review(&m2, &carol, Verdict::Confirm, "ok").unwrap();
    w.engine.review(&m2, &dave, Verdict::Confirm, "ok").unwrap();
    let report = w.engine.audit().last().unwrap();
    // inflow 120, no remarks: author class floor(120 * 5/8) = 75 -> 45/30
    let paid = |addr: &Address| -> u64 {
        report
            .per_beneficiary
            .iter()
            .filter(|l| l.to == *addr)
            .map(|l| l.amount.grains())
            .sum()
    };
    assert_eq!(paid(&alice), 45);
    assert_eq!(paid(&bob), 30);
}

#[test]
fn revision_with_duplicate_authors_is_rejected() {
    let mut w = World::new();
    let alice = w.user("alice", false);
    let genesis = w.engine.genesis();
    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    let m1 = w.submit(&c1, "m1", &[genesis]);
    let err = w
        .engine
        .revise_manuscript(
            &m1,
            sha256(b"v2"),
            None,
            Some(vec![(alice, Weight::new(1, 2)), (alice, Weight::new(1, 2))]),
        )
        .unwrap_err();
    assert!(matches!(err, Error::InvalidShares(_)));
    // rollback left version 1 intact
    assert_eq!(w.engine.graph().get(&m1).unwrap().meta.version, 1);
}

#[test]
fn remark_stakes_are_additive_and_split_by_proportion() {
    let mut w = World::new();
    let alice = w.user("alice", false);
    let erin = w.user("erin", false);
    let frank = w.user("frank", false);
    let carol = w.user("carol", true);
    let dave = w.user("dave", true);
    let citer = w.user("citer", false);
    let genesis = w.engine.genesis();
    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    let m1 = w.submit(&c1, "m1", &[genesis]);
    for (agent, stake) in [(erin, 50u64), (frank, 30u64)] {
        let f = w
            .engine
            .propose_contract(
                ContractKind::Funding,
                vec![agent],
                ShareTable::single(agent),
                TokenAmount::ZERO,
                ContractTerms::Funding {
                    covered_fraction: Weight::new(0, 1),
                    clawback_share: Weight::new(0, 1),
                    authorship: c1,
                },
                None,
            )
            .unwrap();
        w.engine.sign_contract(&f, &agent).unwrap();
        w.engine
            .attach_remark(&m1, &agent, RemarkKind::Funding, TokenAmount(stake), sha256(b"t"), &f)
            .unwrap();
    }
    let node = w.engine.graph().get(&m1).unwrap();
    assert_eq!(node.remarks.len(), 2);
    let remark_pool: TokenAmount = node.remarks.iter().map(|r| r.stake).sum();
    assert_eq!(remark_pool, TokenAmount(80));

    w.reviewer_contract(&m1, &carol);
    w.reviewer_contract(&m1, &dave);
    w.engine.review(&m1, &carol, Verdict::Confirm, "ok").unwrap();
    w.engine.review(&m1, &dave, Verdict::Confirm, "ok").unwrap();
    // m1 pool = 100 + 10 + 10 + 80 = 200, all to genesis
    assert_eq!(w.engine.audit()[0].pool, TokenAmount(200));

    // a citation of m1 splits the remark class 5:3 between the agents
    let c2 = w.authorship(&[(citer, Weight::from_integer(1))], 100);
    let m2 = w.submit(&c2, "m2", &[m1]);
    w.reviewer_contract(&m2, &carol);
    w.reviewer_contract(&m2, &dave);
    w.engine.review(&m2, &carol, Verdict::Confirm, "ok").unwrap();
    w.engine.review(&m2, &dave, Verdict::Confirm, "ok").unwrap();
    let report = w.engine.audit().last().unwrap();
    // m2 pool 120 -> single citation -> inflow 120; remark class
    // floor(120/5) = 24, split 5:3 -> 15 and 9
    let remark_amount = |agent: &Address| -> u64 {
        report
            .per_beneficiary
            .iter()
            .filter(|l| l.to == *agent)
            .map(|l| l.amount.grains())
            .sum()
    };
    assert_eq!(remark_amount(&erin), 15);
    assert_eq!(remark_amount(&frank), 9);
    assert!(w.engine.conservation_holds());
}

#[test]
fn underfunded_reviewer_signature_rolls_back() {
    let mut w = World::new();
    let alice = w.user("alice", false);
    let carol = w.user("carol", true);
    let genesis = w.engine.genesis();
    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    let m1 = w.submit(&c1, "m1", &[genesis]);
    // carol's gift cannot cover a 500-grain stake
    let r1 = w
        .engine
        .propose_contract(
            ContractKind::Review,
            vec![carol],
            ShareTable::single(carol),
            TokenAmount(500),
            ContractTerms::Review,
            Some(m1),
        )
        .unwrap();
    let err = w.engine.sign_contract(&r1, &carol).unwrap_err();
    assert!(matches!(err, Error::InsufficientFunds { .. }));
    let contract = w.engine.registry().get(&r1).unwrap();
    assert_eq!(contract.state, ContractState::Proposed);
    assert!(contract.signatures.is_empty(), "rollback must drop the signature");
}

#[test]
fn three_citation_split_sends_dust_to_treasury() {
    let mut w = World::new();
    let authors: Vec<Address> = (0..3).map(|i| w.user(&format!("a{i}"), false)).collect();
    let citer = w.user("citer", false);
    let carol = w.user("carol", true);
    let dave = w.user("dave", true);
    let genesis = w.engine.genesis();
    // three confirmed targets: genesis plus two single-author papers
    let mut targets = vec![genesis];
    for (i, author) in authors.iter().take(2).enumerate() {
        let c = w.authorship(&[(*author, Weight::from_integer(1))], 100);
        let m = w.submit(&c, &format!("t{i}"), &[genesis]);
        w.reviewer_contract(&m, &carol);
        w.reviewer_contract(&m, &dave);
        w.engine.review(&m, &carol, Verdict::Confirm, "ok").unwrap();
        w.engine.review(&m, &dave, Verdict::Confirm, "ok").unwrap();
        targets.push(m);
    }
    // author stake 80 + two reviewer stakes = pool 100 across 3 citations
    let c = w.authorship(&[(citer, Weight::from_integer(1))], 80);
    let m = w.submit(&c, "citing", &targets);
    w.reviewer_contract(&m, &carol);
    w.reviewer_contract(&m, &dave);
    w.engine.review(&m, &carol, Verdict::Confirm, "ok").unwrap();
    w.engine.review(&m, &dave, Verdict::Confirm, "ok").unwrap();
    let report = w.engine.audit().last().unwrap();
    assert_eq!(report.pool, TokenAmount(100));
    assert_eq!(report.per_citation.len(), 3);
    assert!(report
        .per_citation
        .iter()
        .all(|(_, amount)| *amount == TokenAmount(33)));
    let out: u64 = report.per_beneficiary.iter().map(|l| l.amount.grains()).sum();
    assert_eq!(out, 100, "the leftover grain lands in the treasury");
    assert!(w.engine.conservation_holds());
}

#[test]
fn trigger_execution_is_deterministic() {
    use peerchain_core::consensus::EscrowBacking;
    use peerchain_core::contracts::{execute_trigger, BeneficiaryClass, TriggerContext, TriggerEvent};
    use peerchain_core::ledger::EscrowId;
    let mut w = World::new();
    let alice = w.user("alice", false);
    let carol = w.user("carol", true);
    let dave = w.user("dave", true);
    let genesis = w.engine.genesis();
    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    let m1 = w.submit(&c1, "m1", &[genesis]);
    w.reviewer_contract(&m1, &carol);
    w.reviewer_contract(&m1, &dave);
    w.engine.review(&m1, &carol, Verdict::Confirm, "ok").unwrap();
    w.engine.review(&m1, &dave, Verdict::Confirm, "ok").unwrap();
    let confirmed = w.engine.graph().get(&m1).unwrap().key;

    let event = TriggerEvent::CitationReceived {
        cited: confirmed,
        amount: TokenAmount(100),
        citing: genesis,
    };
    let escrows = [EscrowBacking {
        id: EscrowId::default(),
        owner: alice,
        amount: TokenAmount(100),
        class: BeneficiaryClass::Author,
    }];
    let ctx = TriggerContext {
        graph: w.engine.graph(),
        registry: w.engine.registry(),
        policy: w.engine.policy(),
        treasury: w.engine.treasury(),
        escrows: &escrows,
    };
    let first = execute_trigger(&event, &[], &ctx).unwrap();
    let second = execute_trigger(&event, &[], &ctx).unwrap();
    assert_eq!(first.instructions, second.instructions);
}

#[test]
fn trigger_for_wrong_manuscript_is_state_mismatch() {
    use peerchain_core::contracts::{execute_trigger, TriggerContext, TriggerEvent};
    let mut w = World::new();
    let alice = w.user("alice", false);
    let bob = w.user("bob", false);
    let genesis = w.engine.genesis();
    let c1 = w.authorship(&[(alice, Weight::from_integer(1))], 100);
    let m1 = w.submit(&c1, "m1", &[genesis]);
    let c2 = w.authorship(&[(bob, Weight::from_integer(1))], 100);
    let m2 = w.submit(&c2, "m2", &[genesis]);
    let contracts: Vec<_> = w.engine.registry().for_manuscript(&m2);
    let err = execute_trigger(
        &TriggerEvent::ManuscriptConfirmed(m1),
        &contracts,
        &TriggerContext {
            graph: w.engine.graph(),
            registry: w.engine.registry(),
            policy: w.engine.policy(),
            treasury: w.engine.treasury(),
            escrows: &[],
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::StateMismatch(_)));
}
