use crate::error::{Error, Result};

pub const DEFAULT_ENUM_CAP: u64 = 10_000_000;

/// Upper bound on the number of worlds any exact enumeration may visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumCap(pub u64);

impl Default for EnumCap {
    fn default() -> Self {
        EnumCap(DEFAULT_ENUM_CAP)
    }
}

impl EnumCap {
    pub fn check(self, size: u128) -> Result<()> {
        if size > self.0 as u128 {
            Err(Error::TooLarge { size, cap: self.0 })
        } else {
            Ok(())
        }
    }
}

/// Product of sizes, saturating instead of overflowing.
pub fn space_size(sizes: impl IntoIterator<Item = usize>) -> u128 {
    sizes.into_iter().fold(1u128, |acc, s| acc.saturating_mul(s as u128))
}
