//! Signed agent credentials and trust anchors.
//!
//! A credential is a small text document, one field per line in fixed order,
//! signed with Ed25519 by an issuer whose verification key is configured as a
//! trust anchor. It stands in for the agent's X.509 certificate; only the
//! subject's `CN` and `role` fields are interpreted.

use std::collections::BTreeMap;
use std::fmt;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use chrono::{DateTime, Utc};
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::{format_rfc3339, parse_rfc3339};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CredentialError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("issuer {0:?} already has a trust anchor")]
    DuplicateIssuer(String),
}

fn malformed(line: usize, message: impl Into<String>) -> CredentialError {
    CredentialError::Malformed { line, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credential {
    pub subject: String,
    pub issuer: String,
    pub not_before: DateTime<Utc>,
    pub not_after: DateTime<Utc>,
    pub public_key_id: String,
    pub signature: Vec<u8>,
}

const FIELDS: [&str; 6] = ["subject", "issuer", "notBefore", "notAfter", "publicKeyId", "signature"];

impl Credential {
    /// The bytes covered by the signature: the first five lines of the text form.
    pub fn signed_bytes(&self) -> Vec<u8> {
        format!(
            "subject: {}\nissuer: {}\nnotBefore: {}\nnotAfter: {}\npublicKeyId: {}\n",
            self.subject,
            self.issuer,
            format_rfc3339(&self.not_before),
            format_rfc3339(&self.not_after),
            self.public_key_id
        )
        .into_bytes()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from_utf8(self.signed_bytes()).expect("utf-8");
        s.push_str("signature: ");
        s.push_str(&B64.encode(&self.signature));
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, CredentialError> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() != FIELDS.len() {
            return Err(malformed(
                lines.len().max(1),
                format!("expected {} lines, found {}", FIELDS.len(), lines.len()),
            ));
        }
        let mut values = Vec::with_capacity(FIELDS.len());
        for (i, (line, key)) in lines.iter().zip(FIELDS).enumerate() {
            let value = line
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(": "))
                .ok_or_else(|| malformed(i + 1, format!("expected field {key:?}")))?;
            values.push(value);
        }
        let time = |i: usize| parse_rfc3339(values[i]).ok_or_else(|| malformed(i + 1, "timestamp is not RFC-3339"));
        Ok(Self {
            subject: values[0].to_string(),
            issuer: values[1].to_string(),
            not_before: time(2)?,
            not_after: time(3)?,
            public_key_id: values[4].to_string(),
            signature: B64.decode(values[5]).map_err(|e| malformed(6, format!("signature is not base64: {e}")))?,
        })
    }

    pub fn subject_fields(&self) -> SubjectFields {
        SubjectFields::parse(&self.subject)
    }
}

impl fmt::Display for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// `key=value` pairs of a subject such as `CN=agent, role=grounder`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubjectFields(BTreeMap<String, String>);

impl SubjectFields {
    pub fn parse(subject: &str) -> Self {
        Self(
            subject
                .split(',')
                .filter_map(|part| part.split_once('='))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .filter(|(k, v)| !k.is_empty() && !v.is_empty())
                .collect(),
        )
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn common_name(&self) -> Option<&str> {
        self.get("CN")
    }

    pub fn role(&self) -> Option<&str> {
        self.get("role")
    }
}

pub fn key_id(key: &VerifyingKey) -> String {
    let digest = Sha256::digest(key.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustAnchor {
    pub issuer: String,
    pub key: VerifyingKey,
}

impl TrustAnchor {
    pub fn to_text(&self) -> String {
        format!("issuer: {}\npublicKey: {}\n", self.issuer, B64.encode(self.key.as_bytes()))
    }

    pub fn parse(text: &str) -> Result<Self, CredentialError> {
        let (issuer, key) = two_fields(text, "publicKey")?;
        let bytes: [u8; 32] = key.try_into().map_err(|_| malformed(2, "public key must be 32 bytes"))?;
        let key = VerifyingKey::from_bytes(&bytes).map_err(|e| malformed(2, e.to_string()))?;
        Ok(Self { issuer, key })
    }

    pub fn key_id(&self) -> String {
        key_id(&self.key)
    }

    pub fn verify(&self, credential: &Credential) -> bool {
        let Ok(bytes) = <[u8; 64]>::try_from(credential.signature.as_slice()) else {
            return false;
        };
        self.key.verify(&credential.signed_bytes(), &Signature::from_bytes(&bytes)).is_ok()
    }
}

fn two_fields(text: &str, second: &str) -> Result<(String, Vec<u8>), CredentialError> {
    let lines: Vec<&str> = text.lines().collect();
    let [first, key_line] = lines.as_slice() else {
        return Err(malformed(1, "expected 2 lines"));
    };
    let issuer = first.strip_prefix("issuer: ").ok_or_else(|| malformed(1, "expected field \"issuer\""))?;
    let encoded = key_line
        .strip_prefix(second)
        .and_then(|r| r.strip_prefix(": "))
        .ok_or_else(|| malformed(2, format!("expected field {second:?}")))?;
    let bytes = B64.decode(encoded).map_err(|e| malformed(2, format!("not base64: {e}")))?;
    Ok((issuer.to_string(), bytes))
}

/// One anchor per issuer name.
#[derive(Debug, Clone, Default)]
pub struct TrustStore {
    anchors: BTreeMap<String, TrustAnchor>,
}

impl TrustStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, anchor: TrustAnchor) -> Result<(), CredentialError> {
        if self.anchors.contains_key(&anchor.issuer) {
            return Err(CredentialError::DuplicateIssuer(anchor.issuer));
        }
        self.anchors.insert(anchor.issuer.clone(), anchor);
        Ok(())
    }

    pub fn get(&self, issuer: &str) -> Option<&TrustAnchor> {
        self.anchors.get(issuer)
    }
}

impl From<TrustAnchor> for TrustStore {
    fn from(anchor: TrustAnchor) -> Self {
        let mut s = Self::new();
        s.add(anchor).expect("empty store");
        s
    }
}

/// Issuing side of a trust anchor.
#[derive(Debug, Clone)]
pub struct CertificateAuthority {
    pub issuer: String,
    key: SigningKey,
}

impl CertificateAuthority {
    /// Deterministic keypair derived from `seed`; intended for tests and simulations.
    pub fn from_seed(issuer: impl Into<String>, seed: &str) -> Self {
        let secret: [u8; 32] = Sha256::digest(seed.as_bytes()).into();
        Self { issuer: issuer.into(), key: SigningKey::from_bytes(&secret) }
    }

    pub fn anchor(&self) -> TrustAnchor {
        TrustAnchor { issuer: self.issuer.clone(), key: self.key.verifying_key() }
    }

    pub fn issue(&self, subject: impl Into<String>, not_before: DateTime<Utc>, not_after: DateTime<Utc>) -> Credential {
        let mut c = Credential {
            subject: subject.into(),
            issuer: self.issuer.clone(),
            not_before,
            not_after,
            public_key_id: key_id(&self.key.verifying_key()),
            signature: Vec::new(),
        };
        c.signature = self.key.sign(&c.signed_bytes()).to_bytes().to_vec();
        c
    }

    pub fn issue_agent(&self, cn: &str, role: &str, not_before: DateTime<Utc>, not_after: DateTime<Utc>) -> Credential {
        self.issue(format!("CN={cn}, role={role}"), not_before, not_after)
    }

    pub fn key_text(&self) -> String {
        format!("issuer: {}\nsecretKey: {}\n", self.issuer, B64.encode(self.key.to_bytes()))
    }

    pub fn parse_key(text: &str) -> Result<Self, CredentialError> {
        let (issuer, secret) = two_fields(text, "secretKey")?;
        let bytes: [u8; 32] = secret.try_into().map_err(|_| malformed(2, "secret key must be 32 bytes"))?;
        Ok(Self { issuer, key: SigningKey::from_bytes(&bytes) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t(y: i32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, 1, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn text_form_round_trips_and_verifies() {
        let ca = CertificateAuthority::from_seed("test-ca", "seed");
        let cred = ca.issue_agent("g1", "grounder", t(2025), t(2026));
        assert_eq!(cred.subject, "CN=g1, role=grounder");
        let text = cred.to_text();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("subject: CN=g1, role=grounder\nissuer: test-ca\nnotBefore: 2025-01-01T00:00:00Z\n"));
        let back = Credential::parse(&text).unwrap();
        assert_eq!(back, cred);
        assert!(ca.anchor().verify(&back));
    }

    #[test]
    fn tampered_subject_fails_verification() {
        let ca = CertificateAuthority::from_seed("test-ca", "seed");
        let mut cred = ca.issue_agent("g1", "grounder", t(2025), t(2026));
        cred.subject = "CN=g1, role=actuator".into();
        assert!(!ca.anchor().verify(&cred));
    }

    #[test]
    fn deterministic_keys() {
        let a = CertificateAuthority::from_seed("x", "s");
        let b = CertificateAuthority::from_seed("x", "s");
        assert_eq!(a.anchor(), b.anchor());
        let back = CertificateAuthority::parse_key(&a.key_text()).unwrap();
        assert_eq!(back.anchor(), a.anchor());
        assert_eq!(TrustAnchor::parse(&a.anchor().to_text()).unwrap(), a.anchor());
    }

    #[test]
    fn subject_fields() {
        let f = SubjectFields::parse("CN=agent, role=grounder");
        assert_eq!(f.common_name(), Some("agent"));
        assert_eq!(f.role(), Some("grounder"));
        assert_eq!(SubjectFields::parse("CN=g1").role(), None);
    }

    #[test]
    fn malformed_credential_reports_line() {
        let ca = CertificateAuthority::from_seed("test-ca", "seed");
        let text = ca.issue_agent("g1", "grounder", t(2025), t(2026)).to_text().replace("notAfter: ", "notafter: ");
        assert_eq!(
            Credential::parse(&text).unwrap_err(),
            CredentialError::Malformed { line: 4, message: "expected field \"notAfter\"".into() }
        );
    }

    #[test]
    fn one_anchor_per_issuer() {
        let ca = CertificateAuthority::from_seed("test-ca", "seed");
        let mut store = TrustStore::from(ca.anchor());
        assert!(store.add(ca.anchor()).is_err());
    }
}
