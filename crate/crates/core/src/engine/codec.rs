//! Order-preserving binary encoding for shuffle keys and payloads.
//!
//! Encoded byte strings compare (memcmp) in the same order as the values they
//! encode, and every encoding is self-delimiting, so tuples encode by plain
//! concatenation and still sort lexicographically by component.

use crate::error::{Error, Result};

pub trait Codec: Sized {
    fn encode(&self, out: &mut Vec<u8>);

    /// Decodes one value from the front of `input`, advancing it.
    fn decode(input: &mut &[u8]) -> Result<Self>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode(&mut out);
        out
    }

    fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let v = Self::decode(&mut bytes)?;
        if !bytes.is_empty() {
            return Err(Error::Codec(format!("{} trailing bytes", bytes.len())));
        }
        Ok(v)
    }
}

fn take<'a>(input: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if input.len() < n {
        return Err(Error::Codec(format!("need {n} bytes, have {}", input.len())));
    }
    let (head, tail) = input.split_at(n);
    *input = tail;
    Ok(head)
}

// Strings: 0x00 escaped as 0x00 0xFF, terminated by 0x00 0x01.
impl Codec for String {
    fn encode(&self, out: &mut Vec<u8>) {
        for &b in self.as_bytes() {
            out.push(b);
            if b == 0 {
                out.push(0xFF);
            }
        }
        out.extend_from_slice(&[0x00, 0x01]);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        let mut bytes = Vec::new();
        let mut i = 0;
        loop {
            match input.get(i) {
                None => return Err(Error::Codec("unterminated string".into())),
                Some(0) => match input.get(i + 1) {
                    Some(0xFF) => {
                        bytes.push(0);
                        i += 2;
                    }
                    Some(0x01) => {
                        i += 2;
                        break;
                    }
                    _ => return Err(Error::Codec("bad string escape".into())),
                },
                Some(&b) => {
                    bytes.push(b);
                    i += 1;
                }
            }
        }
        *input = &input[i..];
        String::from_utf8(bytes).map_err(|e| Error::Codec(e.to_string()))
    }
}

impl Codec for u64 {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_be_bytes());
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        let b = take(input, 8)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }
}

impl Codec for u32 {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_be_bytes());
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        let b = take(input, 4)?;
        Ok(u32::from_be_bytes(b.try_into().unwrap()))
    }
}

impl Codec for i64 {
    fn encode(&self, out: &mut Vec<u8>) {
        ((*self as u64) ^ (1 << 63)).encode(out);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        Ok((u64::decode(input)? ^ (1 << 63)) as i64)
    }
}

impl Codec for bool {
    fn encode(&self, out: &mut Vec<u8>) {
        out.push(*self as u8);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        match take(input, 1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Codec(format!("bad bool byte {b}"))),
        }
    }
}

// IEEE floats: flip all bits of negatives, only the sign bit of positives.
impl Codec for f64 {
    fn encode(&self, out: &mut Vec<u8>) {
        let bits = self.to_bits();
        let key = if bits >> 63 == 1 { !bits } else { bits | (1 << 63) };
        key.encode(out);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        let key = u64::decode(input)?;
        let bits = if key >> 63 == 1 { key & !(1 << 63) } else { !key };
        Ok(f64::from_bits(bits))
    }
}

impl Codec for f32 {
    fn encode(&self, out: &mut Vec<u8>) {
        let bits = self.to_bits();
        let key = if bits >> 31 == 1 { !bits } else { bits | (1 << 31) };
        key.encode(out);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        let key = u32::decode(input)?;
        let bits = if key >> 31 == 1 { key & !(1 << 31) } else { !key };
        Ok(f32::from_bits(bits))
    }
}

impl Codec for () {
    fn encode(&self, _out: &mut Vec<u8>) {}

    fn decode(_input: &mut &[u8]) -> Result<Self> {
        Ok(())
    }
}

macro_rules! tuple_codec {
    ($($name:ident),+) => {
        impl<$($name: Codec),+> Codec for ($($name,)+) {
            #[allow(non_snake_case)]
            fn encode(&self, out: &mut Vec<u8>) {
                let ($($name,)+) = self;
                $($name.encode(out);)+
            }

            fn decode(input: &mut &[u8]) -> Result<Self> {
                Ok(($($name::decode(input)?,)+))
            }
        }
    };
}

tuple_codec!(A);
tuple_codec!(A, B);
tuple_codec!(A, B, C);
tuple_codec!(A, B, C, D);

// Lists: each element prefixed by 0x01, terminated by 0x00.
impl<T: Codec> Codec for Vec<T> {
    fn encode(&self, out: &mut Vec<u8>) {
        for item in self {
            out.push(1);
            item.encode(out);
        }
        out.push(0);
    }

    fn decode(input: &mut &[u8]) -> Result<Self> {
        let mut items = Vec::new();
        loop {
            match take(input, 1)?[0] {
                0 => return Ok(items),
                1 => items.push(T::decode(input)?),
                b => return Err(Error::Codec(format!("bad list marker {b}"))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn string_order_preserved(a in ".*", b in ".*") {
            let (ea, eb) = (a.to_bytes(), b.to_bytes());
            prop_assert_eq!(a.as_bytes().cmp(b.as_bytes()), ea.cmp(&eb));
            prop_assert_eq!(String::from_bytes(&ea).unwrap(), a);
        }

        #[test]
        fn f64_order_preserved(a in proptest::num::f64::NORMAL | proptest::num::f64::ZERO | proptest::num::f64::INFINITE,
                               b in proptest::num::f64::NORMAL | proptest::num::f64::ZERO) {
            let (ea, eb) = (a.to_bytes(), b.to_bytes());
            if a < b {
                prop_assert!(ea < eb);
            } else if a > b {
                prop_assert!(ea > eb);
            }
            prop_assert_eq!(f64::from_bytes(&ea).unwrap().to_bits(), a.to_bits());
        }

        #[test]
        fn tuple_order_is_lexicographic(a in ("[a-c\\x00]{0,3}", any::<i64>()), b in ("[a-c\\x00]{0,3}", any::<i64>())) {
            let ka = (a.0.clone(), a.1).to_bytes();
            let kb = (b.0.clone(), b.1).to_bytes();
            let natural = a.0.as_bytes().cmp(b.0.as_bytes()).then(a.1.cmp(&b.1));
            prop_assert_eq!(natural, ka.cmp(&kb));
        }
    }

    #[test]
    fn nested_roundtrip() {
        let v: (String, Vec<(String, f64)>, bool) =
            ("k\0ey".into(), vec![("a".into(), -0.5), ("".into(), 2.0)], true);
        let back = <(String, Vec<(String, f64)>, bool)>::from_bytes(&v.to_bytes()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn truncated_input_is_rejected() {
        let bytes = "abc".to_string().to_bytes();
        assert!(String::from_bytes(&bytes[..2]).is_err());
        assert!(u64::from_bytes(&[1, 2, 3]).is_err());
    }
}
