//! Gadget registry for the unsafe tagged-object extension.
//!
//! A gadget is a named constructor that a tagged node invokes at parse time.
//! Gadgets never touch the host OS: they return an effect descriptor of the
//! caller's choosing, and the caller decides what (if anything) to do with it.

use std::collections::BTreeMap;

use crate::error::ParseError;
use crate::value::Node;

type GadgetFn<E> = Box<dyn Fn(&[Node]) -> Result<E, String> + Send + Sync>;

/// A gadget invocation produced by unsafe parsing. `effect` is whatever the
/// registered gadget returned.
#[derive(Debug, Clone, PartialEq)]
pub struct GadgetCall<E> {
    pub name: String,
    pub args: Vec<Node>,
    pub effect: E,
}

/// Maps gadget names to effect constructors. Immutable once built.
pub struct GadgetRegistry<E> {
    gadgets: BTreeMap<String, GadgetFn<E>>,
}

impl<E> Default for GadgetRegistry<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> GadgetRegistry<E> {
    pub fn new() -> Self {
        GadgetRegistry {
            gadgets: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: impl Into<String>, f: F)
    where
        F: Fn(&[Node]) -> Result<E, String> + Send + Sync + 'static,
    {
        self.gadgets.insert(name.into(), Box::new(f));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.gadgets.contains_key(name)
    }

    pub(crate) fn invoke(&self, name: &str, args: Vec<Node>) -> Result<GadgetCall<E>, ParseError> {
        let f = self
            .gadgets
            .get(name)
            .ok_or_else(|| ParseError::UnknownGadget {
                name: name.to_string(),
            })?;
        let effect = f(&args).map_err(|msg| ParseError::Gadget {
            name: name.to_string(),
            msg,
        })?;
        Ok(GadgetCall {
            name: name.to_string(),
            args,
            effect,
        })
    }
}
