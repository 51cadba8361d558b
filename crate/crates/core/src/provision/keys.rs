use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};
use x25519_dalek::{PublicKey, StaticSecret};

/// Curve25519 key pair in WireGuard form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    #[serde(with = "b64")]
    pub private_key: [u8; 32],
    #[serde(with = "b64")]
    pub public_key: [u8; 32],
}

impl KeyPair {
    /// Clamp `bytes` and derive the matching public key.
    pub fn from_private(mut bytes: [u8; 32]) -> Self {
        clamp(&mut bytes);
        let public = PublicKey::from(&StaticSecret::from(bytes));
        Self { private_key: bytes, public_key: public.to_bytes() }
    }

    pub fn private_b64(&self) -> String {
        STANDARD.encode(self.private_key)
    }

    pub fn public_b64(&self) -> String {
        STANDARD.encode(self.public_key)
    }
}

fn clamp(bytes: &mut [u8; 32]) {
    bytes[0] &= 248;
    bytes[31] &= 127;
    bytes[31] |= 64;
}

pub fn generate_keypair<R: Rng + ?Sized>(rng: &mut R) -> KeyPair {
    let mut bytes = [0u8; 32];
    rng.fill(&mut bytes);
    KeyPair::from_private(bytes)
}

mod b64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(key: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(key))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("key must decode to 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn hex32(s: &str) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).unwrap();
        }
        out
    }

    #[test]
    fn all_ones_is_clamped() {
        let kp = KeyPair::from_private([0xff; 32]);
        assert_eq!(kp.private_key[0] & 0b111, 0);
        assert_eq!(kp.private_key[31] & 0x80, 0);
        assert_eq!(kp.private_key[31] & 0x40, 0x40);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_keypair(&mut seed::rng(5));
        let b = generate_keypair(&mut seed::rng(5));
        assert_eq!(a, b);
        assert_ne!(a, generate_keypair(&mut seed::rng(6)));
        assert_eq!(KeyPair::from_private(a.private_key), a);
    }

    #[test]
    fn base64_form() {
        let kp = generate_keypair(&mut seed::rng(1));
        for text in [kp.public_b64(), kp.private_b64()] {
            assert_eq!(text.len(), 44);
            assert!(text.ends_with('='));
        }
    }

    // RFC 7748 section 6.1
    #[test]
    fn rfc7748_alice() {
        let kp = KeyPair::from_private(hex32(
            "77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a",
        ));
        assert_eq!(
            kp.public_key,
            hex32("8520f0098930a754748b7ddcb43ef75a0dbf3a0d26381af4eba4a98eaa9b4e6a")
        );
    }

    #[test]
    fn serde_as_base64() {
        let kp = generate_keypair(&mut seed::rng(3));
        let json = serde_json::to_value(&kp).unwrap();
        assert_eq!(json["public_key"], kp.public_b64());
        let back: KeyPair = serde_json::from_value(json).unwrap();
        assert_eq!(back, kp);
    }
}
