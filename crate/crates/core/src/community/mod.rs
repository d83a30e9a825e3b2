//! The boundary to the forum: an abstract port, a simulator-backed port and
//! an HTTP port.

#[cfg(feature = "rest")]
mod rest;
mod sim;
mod sim_text;

#[cfg(feature = "rest")]
pub use rest::{RestConfig, RestPort};
pub use sim::{sim_advance, CategoryMix, SimError, SimEvent, SimPort, SimScenario, SimState, ValenceMix, BOT_AUTHOR_ID};

use crate::corpus::{AuthorRole, Millis, Post, ResponseMsg};

/// Words the simulator draws informational posts from.
pub fn sim_informational_words() -> &'static [&'static str] {
    sim_text::informational_words()
}
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PortError {
    #[error("network failure after {attempts} attempts: {message}")]
    Network { attempts: u32, message: String },
    #[error("server answered {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("unknown post {0}")]
    UnknownPost(String),
}

/// Read and publish access to a community. Fetch results are sorted by
/// `created_at` ascending and include only items created strictly after
/// `since`.
pub trait CommunityPort {
    fn fetch_posts(&mut self, since: Millis) -> Result<Vec<Post>, PortError>;
    fn fetch_responses(&mut self, post_id: &str, since: Millis) -> Result<Vec<ResponseMsg>, PortError>;
    /// Stores a reply and returns it with its assigned id and timestamp.
    fn publish(&mut self, post_id: &str, text: &str, author_role: AuthorRole) -> Result<ResponseMsg, PortError>;
}

impl<P: CommunityPort + ?Sized> CommunityPort for &mut P {
    fn fetch_posts(&mut self, since: Millis) -> Result<Vec<Post>, PortError> {
        (**self).fetch_posts(since)
    }

    fn fetch_responses(&mut self, post_id: &str, since: Millis) -> Result<Vec<ResponseMsg>, PortError> {
        (**self).fetch_responses(post_id, since)
    }

    fn publish(&mut self, post_id: &str, text: &str, author_role: AuthorRole) -> Result<ResponseMsg, PortError> {
        (**self).publish(post_id, text, author_role)
    }
}
