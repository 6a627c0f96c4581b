use serde::{Deserialize, Serialize};

use crate::error::{MolError, Result};

/// Component layout shared by a query set and an item index.
///
/// `P = p_q * p_x` component pairs are scored per (query, item); pair
/// `(a, b)` lives at flat position `a * p_x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComponentConfig {
    pub p_q: usize,
    pub p_x: usize,
    pub dim: usize,
    /// Score unit-normalized component embeddings instead of raw ones.
    #[serde(default)]
    pub normalized: bool,
}

impl ComponentConfig {
    pub fn new(p_q: usize, p_x: usize, dim: usize, normalized: bool) -> Result<Self> {
        let config = Self { p_q, p_x, dim, normalized };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_q == 0 || self.p_x == 0 || self.dim == 0 {
            return Err(MolError::config(format!(
                "p_q, p_x and dim must all be >= 1 (got p_q={}, p_x={}, dim={})",
                self.p_q, self.p_x, self.dim
            )));
        }
        Ok(())
    }

    /// Total component count `P`.
    pub fn components(&self) -> usize {
        self.p_q * self.p_x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_sizes() {
        assert!(ComponentConfig::new(0, 1, 1, false).is_err());
        assert!(ComponentConfig::new(1, 0, 1, false).is_err());
        assert!(ComponentConfig::new(1, 1, 0, false).is_err());
        assert_eq!(ComponentConfig::new(2, 4, 8, true).unwrap().components(), 8);
    }
}
