use supportbot_core::community::{CommunityPort, PortError};
use supportbot_core::corpus::{AuthorRole, Millis, Post, ResponseMsg};
use supportbot_core::generator::{GeneratorError, Responder, ResponseSource};

/// A community whose posts and human traffic are fixed in advance. Only
/// items created at or before `clock` are visible.
#[derive(Clone, Debug, Default)]
pub struct ScriptPort {
    pub clock: Millis,
    pub posts: Vec<Post>,
    pub responses: Vec<ResponseMsg>,
    pub publish_calls: Vec<(Millis, String, String)>,
    pub fail_fetches: usize,
}

pub fn post(id: &str, author: &str, text: &str, at: Millis) -> Post {
    Post {
        id: id.into(),
        author_id: author.into(),
        text: text.into(),
        created_at: at,
        has_image: false,
        forum_id: "f".into(),
        category: None,
        valence: None,
    }
}

pub fn response(id: &str, post_id: &str, author: &str, role: AuthorRole, at: Millis) -> ResponseMsg {
    ResponseMsg {
        id: id.into(),
        post_id: post_id.into(),
        author_id: author.into(),
        author_role: role,
        text: format!("reply {id}"),
        created_at: at,
        valence: None,
    }
}

impl CommunityPort for ScriptPort {
    fn fetch_posts(&mut self, since: Millis) -> Result<Vec<Post>, PortError> {
        if self.fail_fetches > 0 {
            self.fail_fetches -= 1;
            return Err(PortError::Network { attempts: 1, message: "scripted outage".into() });
        }
        let mut v: Vec<Post> = self.posts.iter().filter(|p| p.created_at > since && p.created_at <= self.clock).cloned().collect();
        v.sort_by_key(|p| p.created_at);
        Ok(v)
    }

    fn fetch_responses(&mut self, post_id: &str, since: Millis) -> Result<Vec<ResponseMsg>, PortError> {
        if !self.posts.iter().any(|p| p.id == post_id) {
            return Err(PortError::UnknownPost(post_id.into()));
        }
        let mut v: Vec<ResponseMsg> =
            self.responses.iter().filter(|r| r.post_id == post_id && r.created_at > since && r.created_at <= self.clock).cloned().collect();
        v.sort_by_key(|r| r.created_at);
        Ok(v)
    }

    fn publish(&mut self, post_id: &str, text: &str, author_role: AuthorRole) -> Result<ResponseMsg, PortError> {
        if !self.posts.iter().any(|p| p.id == post_id) {
            return Err(PortError::UnknownPost(post_id.into()));
        }
        let r = ResponseMsg {
            id: format!("bot{}", self.publish_calls.len() + 1),
            post_id: post_id.into(),
            author_id: "bot".into(),
            author_role,
            text: text.into(),
            created_at: self.clock,
            valence: None,
        };
        self.publish_calls.push((self.clock, post_id.into(), text.into()));
        self.responses.push(r.clone());
        Ok(r)
    }
}

/// Always answers with the same text.
pub struct FixedResponder(pub &'static str);

impl Responder for FixedResponder {
    fn respond(&self, _: &str) -> Result<(String, ResponseSource), GeneratorError> {
        Ok((self.0.to_string(), ResponseSource::Generated))
    }
}

/// A generator whose decoder never produces a token.
pub struct EmptyGenerator;

impl Responder for EmptyGenerator {
    fn respond(&self, _: &str) -> Result<(String, ResponseSource), GeneratorError> {
        Err(GeneratorError::GenerationEmpty)
    }
}
