use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Identifies one page of one document. Ordered by document id, then page number.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PageKey {
    pub doc_id: String,
    pub page_number: u32,
}

impl PageKey {
    pub fn new(doc_id: impl Into<String>, page_number: u32) -> Self {
        Self {
            doc_id: doc_id.into(),
            page_number,
        }
    }
}

impl fmt::Display for PageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.page_number)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid page key {0:?}, expected <doc_id>#<page_number>")]
pub struct PageKeyParseError(pub String);

impl FromStr for PageKey {
    type Err = PageKeyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (doc, page) = s
            .rsplit_once('#')
            .ok_or_else(|| PageKeyParseError(s.to_string()))?;
        let page_number = page
            .parse::<u32>()
            .map_err(|_| PageKeyParseError(s.to_string()))?;
        if doc.is_empty() || page_number == 0 {
            return Err(PageKeyParseError(s.to_string()));
        }
        Ok(PageKey::new(doc, page_number))
    }
}

impl Serialize for PageKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PageKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_is_numeric_on_page() {
        let a = PageKey::new("d1", 2);
        let b = PageKey::new("d1", 10);
        assert!(a < b);
        assert!(PageKey::new("d1", 99) < PageKey::new("d2", 1));
    }

    #[test]
    fn display_parse_round_trip() {
        let k = PageKey::new("abc#def", 7);
        assert_eq!(k.to_string().parse::<PageKey>().unwrap(), k);
        assert!("nopage".parse::<PageKey>().is_err());
        assert!("d#0".parse::<PageKey>().is_err());
    }
}
