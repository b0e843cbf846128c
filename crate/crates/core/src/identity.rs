//! User pool: keypair-backed accounts, research profiles, reviewer opt-in
//! and the one-time gift grant schedule.

use crate::amount::TokenAmount;
use crate::crypto::{Address, CanonicalWriter, DetRng, KeyPair};
use crate::errors::{Error, Result};
use crate::ledger::Tick;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub use crate::crypto::verify_signature;

/// Base gift for opening an account.
pub const GIFT_BASE: u64 = 100;
/// Bonus per non-empty profile attribute (display name, keywords, scholar ids).
pub const GIFT_PER_ATTRIBUTE: u64 = 10;
/// Hard cap on the total grant.
pub const GIFT_CAP: u64 = 150;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum Role {
    Author,
    Reviewer,
    Funder,
    Publisher,
    ServiceProvider,
}

impl Role {
    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "author" => Some(Role::Author),
            "reviewer" => Some(Role::Reviewer),
            "funder" => Some(Role::Funder),
            "publisher" => Some(Role::Publisher),
            "service-provider" => Some(Role::ServiceProvider),
            _ => None,
        }
    }

    pub fn render(&self) -> &'static str {
        match self {
            Role::Author => "author",
            Role::Reviewer => "reviewer",
            Role::Funder => "funder",
            Role::Publisher => "publisher",
            Role::ServiceProvider => "service-provider",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Profile {
    pub display_name: String,
    pub keywords: BTreeSet<String>,
    pub scholar_ids: BTreeMap<String, String>,
    pub roles: BTreeSet<Role>,
    pub reviewer_opt_in: bool,
}

impl Profile {
    /// Normalize to the pool invariants: keywords lower-cased and
    /// deduplicated (the set does the rest), opt-in implies the Reviewer
    /// role.
    pub fn normalized(mut self) -> Profile {
        self.keywords = self
            .keywords
            .into_iter()
            .map(|k| k.trim().to_lowercase())
            .filter(|k| !k.is_empty())
            .collect();
        if self.reviewer_opt_in {
            self.roles.insert(Role::Reviewer);
        }
        self
    }

    /// Count of non-empty gift-relevant attributes.
    pub fn attribute_count(&self) -> u64 {
        let mut n = 0;
        if !self.display_name.trim().is_empty() {
            n += 1;
        }
        if !self.keywords.is_empty() {
            n += 1;
        }
        if !self.scholar_ids.is_empty() {
            n += 1;
        }
        n
    }

    /// Payload an account holder signs to replace their profile.
    pub fn sign_payload(&self, address: &Address) -> Vec<u8> {
        let mut w = CanonicalWriter::new("peerchain.profile");
        w.field_bytes("address", &address.0)
            .field_str("display_name", &self.display_name);
        let keywords: Vec<String> = self.keywords.iter().cloned().collect();
        w.field_list("keywords", &keywords, |w, name, k| {
            w.field_str(name, k);
        });
        w.field_u64("opt_in", self.reviewer_opt_in as u64);
        let roles: Vec<String> = self.roles.iter().map(|r| r.render().to_string()).collect();
        w.field_list("roles", &roles, |w, name, r| {
            w.field_str(name, r);
        });
        let ids: Vec<(String, String)> = self
            .scholar_ids
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        w.field_list("scholar_ids", &ids, |w, name, (k, v)| {
            w.field_str(&format!("{name}.k"), k)
                .field_str(&format!("{name}.v"), v);
        });
        w.into_bytes()
    }
}

/// Mocked external-service check: scheme and value must be non-empty
/// printable tokens without whitespace.
pub fn scholar_id_well_formed(scheme: &str, value: &str) -> bool {
    let token_ok = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_graphic());
    token_ok(scheme) && token_ok(value)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct UserAccount {
    pub address: Address,
    pub keypair: KeyPair,
    pub profile: Profile,
    pub created_at: Tick,
    pub reviews_completed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq, Eq)]
pub struct IdentityPool {
    accounts: BTreeMap<Address, UserAccount>,
}

impl IdentityPool {
    /// Create an account with a fresh keypair drawn from the scenario
    /// stream and return it with the gift amount it is owed. The caller
    /// executes the treasury grant; grants happen exactly once, here.
    pub fn create_account(
        &mut self,
        profile: Profile,
        rng: &mut DetRng,
        now: Tick,
    ) -> (Address, TokenAmount) {
        let profile = profile.normalized();
        let keypair = KeyPair::generate(rng);
        let address = keypair.address();
        assert!(
            !self.accounts.contains_key(&address),
            "address collision in scenario keygen"
        );
        let gift = (GIFT_BASE + GIFT_PER_ATTRIBUTE * profile.attribute_count()).min(GIFT_CAP);
        self.accounts.insert(
            address,
            UserAccount {
                address,
                keypair,
                profile,
                created_at: now,
                reviews_completed: 0,
            },
        );
        (address, TokenAmount(gift))
    }

    pub fn get(&self, addr: &Address) -> Result<&UserAccount> {
        self.accounts
            .get(addr)
            .ok_or_else(|| Error::UnknownAddress(addr.to_hex()))
    }

    pub fn contains(&self, addr: &Address) -> bool {
        self.accounts.contains_key(addr)
    }

    pub fn iter(&self) -> impl Iterator<Item = &UserAccount> {
        self.accounts.values()
    }

    /// Replace a profile. The signature must be the holder's over the new
    /// profile's [`Profile::sign_payload`]. No further gift is granted.
    pub fn update_profile(
        &mut self,
        addr: &Address,
        new_profile: Profile,
        sig: &[u8],
    ) -> Result<()> {
        let account = self
            .accounts
            .get_mut(addr)
            .ok_or_else(|| Error::UnknownAddress(addr.to_hex()))?;
        let new_profile = new_profile.normalized();
        let payload = new_profile.sign_payload(addr);
        if !crate::crypto::verify_signature(account.keypair.public_key(), &payload, sig) {
            return Err(Error::BadSignature {
                context: format!("profile update for {addr}"),
            });
        }
        account.profile = new_profile;
        Ok(())
    }

    pub fn note_review_completed(&mut self, addr: &Address) -> Result<()> {
        let account = self
            .accounts
            .get_mut(addr)
            .ok_or_else(|| Error::UnknownAddress(addr.to_hex()))?;
        account.reviews_completed += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(name: &str, keywords: &[&str], orcid: Option<&str>) -> Profile {
        Profile {
            display_name: name.to_string(),
            keywords: keywords.iter().map(|s| s.to_string()).collect(),
            scholar_ids: orcid
                .map(|v| BTreeMap::from([("orcid".to_string(), v.to_string())]))
                .unwrap_or_default(),
            roles: BTreeSet::from([Role::Author]),
            reviewer_opt_in: false,
        }
    }

    #[test]
    fn gift_schedule() {
        let mut pool = IdentityPool::default();
        let mut rng = DetRng::new(1);
        let (_, gift) = pool.create_account(profile("", &[], None), &mut rng, 0);
        assert_eq!(gift, TokenAmount(100));
        let (_, gift) = pool.create_account(
            profile("Ada", &["blockchain"], Some("0000-0001")),
            &mut rng,
            0,
        );
        assert_eq!(gift, TokenAmount(130));
    }

    #[test]
    fn same_seed_same_addresses() {
        let mut a = IdentityPool::default();
        let mut b = IdentityPool::default();
        let mut rng_a = DetRng::new(5);
        let mut rng_b = DetRng::new(5);
        let (addr_a, _) = a.create_account(profile("x", &[], None), &mut rng_a, 0);
        let (addr_b, _) = b.create_account(profile("x", &[], None), &mut rng_b, 0);
        assert_eq!(addr_a, addr_b);
    }

    #[test]
    fn keywords_lowercased_and_opt_in_implies_role() {
        let p = Profile {
            display_name: "N".into(),
            keywords: BTreeSet::from(["BlockChain".to_string(), " blockchain ".to_string()]),
            scholar_ids: BTreeMap::new(),
            roles: BTreeSet::new(),
            reviewer_opt_in: true,
        }
        .normalized();
        assert_eq!(p.keywords, BTreeSet::from(["blockchain".to_string()]));
        assert!(p.roles.contains(&Role::Reviewer));
    }

    #[test]
    fn update_profile_needs_holder_signature() {
        let mut pool = IdentityPool::default();
        let mut rng = DetRng::new(9);
        let (addr, _) = pool.create_account(profile("a", &[], None), &mut rng, 0);
        let new_profile = profile("a", &["blockchain"], None).normalized();
        let err = pool.update_profile(&addr, new_profile.clone(), b"junk").unwrap_err();
        assert!(matches!(err, Error::BadSignature { .. }));
        let sig = {
            let account = pool.get(&addr).unwrap();
            account.keypair.sign(&new_profile.sign_payload(&addr))
        };
        pool.update_profile(&addr, new_profile, &sig).unwrap();
        assert!(pool.get(&addr).unwrap().profile.keywords.contains("blockchain"));
    }

    #[test]
    fn scholar_id_format() {
        assert!(scholar_id_well_formed("orcid", "0000-0002-1825-0097"));
        assert!(!scholar_id_well_formed("", "x"));
        assert!(!scholar_id_well_formed("orcid", "has space"));
    }
}
