use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Length of a raw token: 26 base32 symbols carry 130 bits.
pub const TOKEN_LEN: usize = 26;

const BASE32: &[u8; 32] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ234567";

/// A raw access token as handed to a person. Deliberately not serializable
/// and redacted in `Debug` output so it cannot leak into persisted or logged
/// artifacts by accident.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RawToken(String);

impl RawToken {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for RawToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RawToken(<redacted>)")
    }
}

/// Draws a fresh token from a cryptographic RNG.
pub fn generate_token<R: Rng + rand::CryptoRng + ?Sized>(rng: &mut R) -> RawToken {
    let s = (0..TOKEN_LEN)
        .map(|_| BASE32[rng.random_range(0..BASE32.len())] as char)
        .collect();
    RawToken(s)
}

/// Hex SHA-256 of `salt || token`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenFingerprint(String);

impl TokenFingerprint {
    pub fn from_hex(hex: impl Into<String>) -> Self {
        Self(hex.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TokenFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Salted, deterministic token digest. Each questionnaire carries its own salt.
#[derive(Clone)]
pub struct TokenDigester {
    salt: [u8; 16],
}

impl TokenDigester {
    pub fn new(salt: [u8; 16]) -> Self {
        Self { salt }
    }

    pub fn random() -> Self {
        Self::new(rand::rng().random())
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s.trim()).ok()?;
        Some(Self::new(bytes.try_into().ok()?))
    }

    pub fn salt_hex(&self) -> String {
        hex::encode(self.salt)
    }

    pub fn digest(&self, token: &str) -> TokenFingerprint {
        let mut h = Sha256::new();
        h.update(self.salt);
        h.update(token.as_bytes());
        TokenFingerprint(hex::encode(h.finalize()))
    }
}

/// Respondent tokens are single use and may submit one response; viewer
/// tokens only open reports and can be reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenClass {
    Respondent,
    Viewer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenState {
    Unused,
    Redeemed,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub fingerprint: TokenFingerprint,
    pub level: u32,
    pub class: TokenClass,
    pub state: TokenState,
}

/// An authenticated party: who may do what on which questionnaire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Principal {
    pub questionnaire_id: String,
    pub level: u32,
    pub class: TokenClass,
    pub fingerprint: TokenFingerprint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TokenRejection {
    #[error("unknown token")]
    UnknownToken,
    #[error("already redeemed")]
    AlreadyRedeemed,
    #[error("revoked")]
    Revoked,
}

/// In-memory token state machine for one questionnaire. Durability and
/// atomicity are the store's job; this type only enforces the transitions.
#[derive(Debug, Clone)]
pub struct TokenRegistry {
    questionnaire_id: String,
    tokens: HashMap<TokenFingerprint, TokenRecord>,
}

impl TokenRegistry {
    pub fn new(questionnaire_id: impl Into<String>) -> Self {
        Self {
            questionnaire_id: questionnaire_id.into(),
            tokens: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, fingerprint: &TokenFingerprint) -> bool {
        self.tokens.contains_key(fingerprint)
    }

    pub fn get(&self, fingerprint: &TokenFingerprint) -> Option<&TokenRecord> {
        self.tokens.get(fingerprint)
    }

    /// Registers an unused token; `false` if the fingerprint already exists.
    pub fn insert(&mut self, fingerprint: TokenFingerprint, level: u32, class: TokenClass) -> bool {
        if self.tokens.contains_key(&fingerprint) {
            return false;
        }
        self.tokens.insert(
            fingerprint.clone(),
            TokenRecord {
                fingerprint,
                level,
                class,
                state: TokenState::Unused,
            },
        );
        true
    }

    /// What redeeming would yield, without changing any state.
    pub fn check(&self, fingerprint: &TokenFingerprint) -> Result<Principal, TokenRejection> {
        let rec = self
            .tokens
            .get(fingerprint)
            .ok_or(TokenRejection::UnknownToken)?;
        match (rec.class, rec.state) {
            (_, TokenState::Revoked) => Err(TokenRejection::Revoked),
            (TokenClass::Respondent, TokenState::Redeemed) => Err(TokenRejection::AlreadyRedeemed),
            _ => Ok(self.principal(rec)),
        }
    }

    /// Redeems a token. Respondent tokens move `unused -> redeemed` exactly
    /// once; viewer tokens stay reusable.
    pub fn redeem(&mut self, fingerprint: &TokenFingerprint) -> Result<Principal, TokenRejection> {
        let principal = self.check(fingerprint)?;
        let rec = self.tokens.get_mut(fingerprint).expect("checked above");
        if rec.class == TokenClass::Respondent {
            rec.state = TokenState::Redeemed;
        }
        Ok(principal)
    }

    pub fn revoke(&mut self, fingerprint: &TokenFingerprint) -> Result<(), TokenRejection> {
        let rec = self
            .tokens
            .get_mut(fingerprint)
            .ok_or(TokenRejection::UnknownToken)?;
        rec.state = TokenState::Revoked;
        Ok(())
    }

    fn principal(&self, rec: &TokenRecord) -> Principal {
        Principal {
            questionnaire_id: self.questionnaire_id.clone(),
            level: rec.level,
            class: rec.class,
            fingerprint: rec.fingerprint.clone(),
        }
    }
}
