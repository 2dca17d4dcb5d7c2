use std::hash::Hasher;

use fnv::FnvHasher;

use super::DescriptorSet;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Content hash of a descriptor set.
///
/// Canonical form: `count` and `dim` as little-endian u64, then every value as
/// the little-endian bit pattern of its f64, row-major. Labels are not part of
/// the hash.
pub fn hash_descriptor_set(set: &DescriptorSet) -> u64 {
    hash_parts(set.count(), set.dim(), set.data())
}

pub(super) fn hash_parts(count: usize, dim: usize, data: &[f64]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&(count as u64).to_le_bytes());
    h.write(&(dim as u64).to_le_bytes());
    for v in data {
        h.write(&v.to_bits().to_le_bytes());
    }
    h.finish()
}
