//! `PPDS` dataset files.
//!
//! ```text
//! "PPDS" | version u32 | name | split tag | sample count u64
//! per sample: subject_id u64 | label u8 | severity f64 | scan tensor | volume tensor
//! ```
//!
//! Strings and tensors use the same encoding as network files. The sample
//! count in the header must match the number of records exactly.

use protolatent_core::data::{Dataset, Sample, SplitTag};

use crate::binfmt::{FormatError, Reader, Writer};

pub const MAGIC: &[u8; 4] = b"PPDS";
pub const VERSION: u32 = 1;

pub fn encode(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.str(&ds.name);
    w.str(ds.split.as_str());
    w.u64(ds.len() as u64);
    for s in &ds.samples {
        w.u64(s.subject_id);
        w.u8(s.label);
        w.f64(s.severity);
        w.tensor(&s.scan);
        w.tensor(&s.volume);
    }
    w.finish()
}

pub fn decode(bytes: &[u8]) -> Result<Dataset, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let name = r.str()?;
    let at = r.offset();
    let tag = r.str()?;
    let split = SplitTag::parse(&tag).ok_or_else(|| r.invalid(at, format!("unknown split `{tag}`")))?;
    // every record takes at least 33 bytes, which bounds a sane count
    let count = r.count((bytes.len() / 33) as u64)?;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let subject_id = r.u64()?;
        let at = r.offset();
        let label = r.u8()?;
        if label > 1 {
            return Err(r.invalid(at, format!("label {label}")));
        }
        let severity = r.f64()?;
        let scan = r.tensor()?;
        let volume = r.tensor()?;
        samples.push(Sample {
            subject_id,
            scan,
            volume,
            label,
            severity,
        });
    }
    r.finish()?;
    Ok(Dataset::new(name, split, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use protolatent_core::data::{generate, GeneratorConfig};

    fn small() -> Dataset {
        let cfg = GeneratorConfig {
            n_subjects: 4,
            samples_per_subject: 2,
            image_size: 8,
            ..GeneratorConfig::default()
        };
        generate(&cfg).unwrap()
    }

    #[test]
    fn datasets_round_trip_byte_for_byte() {
        let ds = small();
        let bytes = encode(&ds);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn truncation_reports_an_offset() {
        let bytes = encode(&small());
        let cut = bytes.len() - 5;
        match decode(&bytes[..cut]) {
            Err(FormatError::Truncated { offset, .. }) => assert_eq!(offset, cut),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_count_must_match_the_records() {
        let ds = small();
        let mut bytes = encode(&ds);
        let pos = 4 + 4 + 4 + ds.name.len() + 4 + ds.split.as_str().len();
        bytes[pos] -= 1;
        assert!(matches!(decode(&bytes), Err(FormatError::Trailing { .. })));
        bytes[pos] += 2;
        assert!(matches!(decode(&bytes), Err(FormatError::Truncated { .. })));
    }
}
