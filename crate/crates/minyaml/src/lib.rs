//! A deliberately small YAML-subset parser with two modes.
//!
//! Safe mode (`parse_safe`) admits scalars, sequences, and mappings only and
//! rejects every tagged node. Unsafe mode (`parse_unsafe`) additionally
//! resolves `!!obj/apply:<name>` tags against a [`GadgetRegistry`], invoking
//! the named gadget *during parsing* — the same construct-on-load behavior
//! that makes unrestricted deserializers exploitable. Gadgets are sandboxed:
//! they return effect descriptors instead of acting on the host.

mod error;
mod gadget;
mod message;
mod parser;
mod value;

pub use error::{MessageError, ParseError};
pub use gadget::{GadgetCall, GadgetRegistry};
pub use message::{fill_message, fill_message_args, FieldType, FieldValue, Message, MessageSchema};
pub use parser::{parse_safe, parse_unsafe, UnsafeNode, UnsafeParse};
pub use value::{serialize, Node, Scalar};
