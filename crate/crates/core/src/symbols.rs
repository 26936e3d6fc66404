use std::collections::HashMap;

use crate::error::{Error, Result};

/// Interned POS tags. Ids start at 1 so that a packed key of ids never
/// contains a zero lane; [`SymbolTable::UNKNOWN`] never matches a stored key.
#[derive(Debug, Clone, Default)]
pub(crate) struct SymbolTable {
    ids: HashMap<String, u16>,
    names: Vec<String>,
}

impl SymbolTable {
    pub const UNKNOWN: u16 = u16::MAX;

    pub fn intern(&mut self, name: &str) -> Result<u16> {
        if let Some(&id) = self.ids.get(name) {
            return Ok(id);
        }
        let id = self.names.len() + 1;
        if id >= Self::UNKNOWN as usize {
            return Err(Error::Argument("POS alphabet exceeds 65534 tags".into()));
        }
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id as u16);
        Ok(id as u16)
    }

    pub fn get(&self, name: &str) -> u16 {
        self.ids.get(name).copied().unwrap_or(Self::UNKNOWN)
    }

    pub fn name(&self, id: u16) -> &str {
        &self.names[id as usize - 1]
    }
}
