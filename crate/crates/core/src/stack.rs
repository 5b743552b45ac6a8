//! Persistent parent-linked stack.
//!
//! Push and pop return new stack values and never touch existing ones, so a
//! parser configuration can be snapshotted or branched by cloning a single
//! pointer. Each node caches a structural hash, making hashing O(1) and
//! letting equality bail out early on mismatched hashes.

use std::hash::{Hash, Hasher};
use std::sync::Arc;

struct Node<T> {
    value: T,
    parent: ExecStack<T>,
    depth: usize,
    hash: u64,
}

pub struct ExecStack<T>(Option<Arc<Node<T>>>);

impl<T> Clone for ExecStack<T> {
    fn clone(&self) -> Self {
        Self(self.0.clone())
    }
}

impl<T> Default for ExecStack<T> {
    fn default() -> Self {
        Self(None)
    }
}

fn mix(parent: u64, value: u64) -> u64 {
    // splitmix64 finalizer over the combined words.
    let mut z = parent
        .rotate_left(29)
        .wrapping_add(value)
        .wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Values stored on an [`ExecStack`] must provide a deterministic 64-bit key.
pub trait StackKey {
    fn stack_key(&self) -> u64;
}

impl<T: StackKey> ExecStack<T> {
    pub fn root() -> Self {
        Self(None)
    }

    pub fn push(&self, value: T) -> Self {
        let hash = mix(self.structural_hash(), value.stack_key());
        Self(Some(Arc::new(Node {
            value,
            parent: self.clone(),
            depth: self.depth() + 1,
            hash,
        })))
    }
}

impl<T> ExecStack<T> {
    pub fn is_root(&self) -> bool {
        self.0.is_none()
    }

    pub fn depth(&self) -> usize {
        self.0.as_ref().map_or(0, |n| n.depth)
    }

    pub fn top(&self) -> Option<&T> {
        self.0.as_ref().map(|n| &n.value)
    }

    /// Top value and the stack below it.
    pub fn pop(&self) -> Option<(&T, ExecStack<T>)> {
        self.0.as_ref().map(|n| (&n.value, n.parent.clone()))
    }

    pub fn parent(&self) -> Option<&ExecStack<T>> {
        self.0.as_ref().map(|n| &n.parent)
    }

    pub fn structural_hash(&self) -> u64 {
        self.0.as_ref().map_or(0x5EED, |n| n.hash)
    }

    pub fn ptr_eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (Some(a), Some(b)) => Arc::ptr_eq(a, b),
            (None, None) => true,
            _ => false,
        }
    }

    /// Values from the top downwards.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let mut cur = self.0.as_deref();
        std::iter::from_fn(move || {
            let n = cur?;
            cur = n.parent.0.as_deref();
            Some(&n.value)
        })
    }
}

impl<T: PartialEq> PartialEq for ExecStack<T> {
    fn eq(&self, other: &Self) -> bool {
        let (mut a, mut b) = (self, other);
        loop {
            if a.ptr_eq(b) {
                return true;
            }
            match (&a.0, &b.0) {
                (Some(x), Some(y)) => {
                    if x.hash != y.hash || x.depth != y.depth || x.value != y.value {
                        return false;
                    }
                    a = &x.parent;
                    b = &y.parent;
                }
                _ => return false,
            }
        }
    }
}

impl<T: Eq> Eq for ExecStack<T> {}

impl<T> Hash for ExecStack<T> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.structural_hash());
    }
}

impl<T: std::fmt::Debug> std::fmt::Debug for ExecStack<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

impl<T> Drop for ExecStack<T> {
    // Unlink uniquely owned nodes iteratively; recursive drop of a long
    // chain would overflow the thread stack.
    fn drop(&mut self) {
        let mut cur = self.0.take();
        while let Some(node) = cur {
            match Arc::try_unwrap(node) {
                Ok(mut inner) => cur = inner.parent.0.take(),
                Err(_) => break,
            }
        }
    }
}
