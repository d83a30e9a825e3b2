use crate::evaluation::valence::ValenceLabel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Milliseconds since the Unix epoch.
pub type Millis = i64;

pub const MINUTE_MS: Millis = 60_000;
pub const HOUR_MS: Millis = 60 * MINUTE_MS;
pub const DAY_MS: Millis = 24 * HOUR_MS;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Post {
    pub id: String,
    pub author_id: String,
    pub text: String,
    pub created_at: Millis,
    #[serde(default)]
    pub has_image: bool,
    #[serde(default)]
    pub forum_id: String,
    /// Coded category, present in labelled training corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<PostLabel>,
    /// Coded valence annotation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valence: Option<ValenceLabel>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorRole {
    Poster,
    Human,
    Bot,
    Operator,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseMsg {
    pub id: String,
    pub post_id: String,
    pub author_id: String,
    pub author_role: AuthorRole,
    pub text: String,
    pub created_at: Millis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valence: Option<ValenceLabel>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopCategory {
    Informational,
    NonInformational,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubCategory {
    EmotionalSupport,
    SharingDailyLife,
}

/// Two-level support category; the sub-category only refines
/// non-informational posts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SupportCategory {
    top: TopCategory,
    sub: Option<SubCategory>,
}

impl SupportCategory {
    pub fn new(top: TopCategory, sub: Option<SubCategory>) -> Option<Self> {
        match (top, sub) {
            (TopCategory::Informational, Some(_)) => None,
            _ => Some(Self { top, sub }),
        }
    }

    pub fn informational() -> Self {
        Self { top: TopCategory::Informational, sub: None }
    }

    pub fn non_informational(sub: Option<SubCategory>) -> Self {
        Self { top: TopCategory::NonInformational, sub }
    }

    pub fn top(&self) -> TopCategory {
        self.top
    }

    pub fn sub(&self) -> Option<SubCategory> {
        self.sub
    }
}

/// The three coded post categories as they appear in corpus files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostLabel {
    Informational,
    EmotionalSupport,
    SharingDailyLife,
}

impl PostLabel {
    pub const ALL: [PostLabel; 3] = [Self::EmotionalSupport, Self::Informational, Self::SharingDailyLife];

    pub fn category(self) -> SupportCategory {
        match self {
            Self::Informational => SupportCategory::informational(),
            Self::EmotionalSupport => SupportCategory::non_informational(Some(SubCategory::EmotionalSupport)),
            Self::SharingDailyLife => SupportCategory::non_informational(Some(SubCategory::SharingDailyLife)),
        }
    }

    pub fn top(self) -> TopCategory {
        self.category().top()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub post_text: String,
    pub label: TopCategory,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairExample {
    pub post_text: String,
    pub response_text: String,
}

/// Immutable set of posts and their responses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    posts: Vec<Post>,
    responses: Vec<ResponseMsg>,
    post_index: BTreeMap<String, usize>,
    thread: BTreeMap<String, Vec<usize>>,
}

impl Corpus {
    /// Builds a corpus from already-validated records.
    pub fn new(posts: Vec<Post>, responses: Vec<ResponseMsg>) -> Self {
        let post_index = posts.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
        let mut thread: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in responses.iter().enumerate() {
            thread.entry(r.post_id.clone()).or_default().push(i);
        }
        for idx in thread.values_mut() {
            idx.sort_by_key(|&i| (responses[i].created_at, i));
        }
        Self { posts, responses, post_index, thread }
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn responses(&self) -> &[ResponseMsg] {
        &self.responses
    }

    pub fn post(&self, id: &str) -> Option<&Post> {
        self.post_index.get(id).map(|&i| &self.posts[i])
    }

    /// Responses to `post_id` ordered by creation time (file order on ties).
    pub fn thread(&self, post_id: &str) -> impl Iterator<Item = &ResponseMsg> {
        self.thread.get(post_id).into_iter().flatten().map(|&i| &self.responses[i])
    }

    pub fn labeled_examples(&self) -> Vec<LabeledExample> {
        self.posts.iter().filter_map(|p| p.category.map(|c| LabeledExample { post_text: p.text.clone(), label: c.top() })).collect()
    }
}
