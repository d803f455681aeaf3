use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label-request allowance. `spent <= accrued` always holds; both only grow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    accrued: u64,
    spent: u64,
}

impl Budget {
    pub fn new() -> Self {
        Budget::default()
    }

    pub fn with_allowance(accrued: u64) -> Self {
        Budget { accrued, spent: 0 }
    }

    pub fn accrued(&self) -> u64 {
        self.accrued
    }

    pub fn spent(&self) -> u64 {
        self.spent
    }

    pub fn remaining(&self) -> u64 {
        self.accrued - self.spent
    }

    pub fn accrue(&mut self, requests: u64) {
        self.accrued += requests;
    }

    pub fn spend(&mut self, requests: u64) -> Result<()> {
        if requests > self.remaining() {
            return Err(Error::invalid(format!(
                "spending {requests} requests with {} remaining",
                self.remaining()
            )));
        }
        self.spent += requests;
        Ok(())
    }
}
