use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::vocab::{BOS, SEP, TAG_ID, TAG_OOD};
use crate::corpus::Domain;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagMode {
    Tag,
    #[default]
    Notag,
}

impl fmt::Display for TagMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagMode::Tag => "tag",
            TagMode::Notag => "notag",
        })
    }
}

impl FromStr for TagMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "tag" => Ok(TagMode::Tag),
            "notag" | "no-tag" => Ok(TagMode::Notag),
            _ => Err(Error::invalid(format!("unknown tag mode `{s}`"))),
        }
    }
}

pub fn domain_tag(domain: Domain) -> &'static str {
    match domain {
        Domain::Id => TAG_ID,
        Domain::Ood => TAG_OOD,
    }
}

/// `<s> SRC </s> TRG <Tag> </s>` in tag mode, `<s> SRC </s> TRG </s>`
/// otherwise.
pub fn render_input(src: &str, tgt: &str, domain: Domain, mode: TagMode) -> String {
    match mode {
        TagMode::Tag => format!("{BOS} {src} {SEP} {tgt} {} {SEP}", domain_tag(domain)),
        TagMode::Notag => format!("{BOS} {src} {SEP} {tgt} {SEP}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates() {
        assert_eq!(
            render_input("Hallo", "Hello", Domain::Id, TagMode::Tag),
            "<s> Hallo </s> Hello <ID> </s>"
        );
        assert_eq!(
            render_input("Hallo", "Hello", Domain::Ood, TagMode::Tag),
            "<s> Hallo </s> Hello <OOD> </s>"
        );
        assert_eq!(
            render_input("Hallo", "Hello", Domain::Id, TagMode::Notag),
            "<s> Hallo </s> Hello </s>"
        );
    }

    #[test]
    fn tag_mode_parsing() {
        assert_eq!("TAG".parse::<TagMode>().unwrap(), TagMode::Tag);
        assert_eq!("notag".parse::<TagMode>().unwrap(), TagMode::Notag);
        assert!("x".parse::<TagMode>().is_err());
    }
}
