//! Deterministic assembly of the three-paragraph generation prompt from an
//! agent's own history and its followees' latest posts.
//!
//! Every template fragment lives in this file so tests can pin the rendering
//! byte for byte. Paragraph three is the open-ended suffix whose unbalanced
//! quote pairs with the `}` stop sequence.

use crate::domain::{AgentId, Post};

/// " posted tweets about '<topic>':" paragraph head.
pub const OWN_HEAD: &str = " posted tweets about ";
/// " saw the following tweets about '<topic>' on homepage" paragraph head.
pub const HOMEPAGE_HEAD: &str = " saw the following tweets about ";
pub const HOMEPAGE_OPEN: &str = " on homepage{'data':";
pub const HOMEPAGE_CLOSE: &str = "}";
/// Open-ended tail of paragraph three; generation continues inside the quote.
pub const SHARE_HEAD: &str = " shared the following tweet on this topic:{'data: {'user': ";
pub const SHARE_TAIL: &str = ",'text':'";
pub const PARAGRAPH_SEP: &str = "\n\n";

/// Everything the prompt for one agent is built from. `own_posts` holds the
/// agent's most recent posts (most recent last, already capped by the
/// caller's history limit); `followee_posts` are the current posts of the
/// agents it follows.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub agent: AgentId,
    pub topic_label: String,
    pub own_posts: Vec<Post>,
    pub followee_posts: Vec<(AgentId, Post)>,
}

impl PromptContext {
    /// Caps history to the last `history_cap` posts and orders followee
    /// records by ascending agent index.
    pub fn new(
        agent: AgentId,
        topic_label: impl Into<String>,
        own_posts: Vec<Post>,
        mut followee_posts: Vec<(AgentId, Post)>,
        history_cap: usize,
    ) -> Self {
        let skip = own_posts.len().saturating_sub(history_cap);
        let own_posts = own_posts.into_iter().skip(skip).collect();
        followee_posts.sort_by_key(|(id, _)| id.index);
        PromptContext {
            agent,
            topic_label: topic_label.into(),
            own_posts,
            followee_posts,
        }
    }
}

/// Single quotes doubled, so post text cannot terminate a record early.
fn escape_text(text: &str) -> String {
    text.replace('\'', "''")
}

/// One homepage record: `{'user': <name>,'text': '<post>'}`.
pub fn homepage_record(followee: &AgentId, post: &Post) -> String {
    format!(
        "{{'user': {},'text': '{}'}}",
        followee.display_name,
        escape_text(&post.text)
    )
}

/// Render the full three-paragraph prompt. Pure: identical contexts yield
/// identical strings.
pub fn build_prompt(ctx: &PromptContext) -> String {
    let name = &ctx.agent.display_name;
    let topic = &ctx.topic_label;

    let mut own = format!("{name}{OWN_HEAD}'{topic}':");
    if !ctx.own_posts.is_empty() {
        let texts: Vec<&str> = ctx.own_posts.iter().map(|p| p.text.as_str()).collect();
        own.push(' ');
        own.push_str(&texts.join(" "));
    }

    let records: Vec<String> = ctx
        .followee_posts
        .iter()
        .map(|(id, post)| homepage_record(id, post))
        .collect();
    let homepage = format!(
        "{name}{HOMEPAGE_HEAD}'{topic}'{HOMEPAGE_OPEN}{}{HOMEPAGE_CLOSE}",
        records.join(",")
    );

    let share = format!("{name}{SHARE_HEAD}{name}{SHARE_TAIL}");

    [own, homepage, share].join(PARAGRAPH_SEP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn agent(i: u32, name: &str) -> AgentId {
        AgentId::new(i, name).unwrap()
    }

    fn post(author: &AgentId, text: &str) -> Post {
        Post::new(author.clone(), 0, text).unwrap()
    }

    #[test]
    fn renders_the_published_template_shape() {
        let a = agent(0, "A");
        let b = agent(1, "B");
        let ctx = PromptContext::new(
            a.clone(),
            "a society without gender",
            vec![post(&a, "my earlier tweet")],
            vec![(b.clone(), post(&b, "their tweet"))],
            1,
        );
        let expected = "A posted tweets about 'a society without gender': my earlier tweet\n\n\
            A saw the following tweets about 'a society without gender' on homepage\
            {'data':{'user': B,'text': 'their tweet'}}\n\n\
            A shared the following tweet on this topic:{'data: {'user': A,'text':'";
        assert_eq!(build_prompt(&ctx), expected);
    }

    #[test]
    fn empty_context_keeps_topic_framing_and_suffix() {
        let a = agent(0, "A");
        let ctx = PromptContext::new(a, "some topic", vec![], vec![], 1);
        let rendered = build_prompt(&ctx);
        assert!(rendered.starts_with("A posted tweets about 'some topic':"));
        assert!(rendered.contains("on homepage{'data':}"));
        assert!(rendered.ends_with(SHARE_TAIL));
    }

    #[test]
    fn two_followees_render_two_records_in_index_order() {
        let a = agent(0, "A");
        let b = agent(1, "B");
        let c = agent(2, "C");
        // deliberately passed out of order
        let ctx = PromptContext::new(
            a.clone(),
            "t",
            vec![],
            vec![
                (c.clone(), post(&c, "from c")),
                (b.clone(), post(&b, "from b")),
            ],
            1,
        );
        let rendered = build_prompt(&ctx);
        // oracle: count record delimiters in the rendered string
        assert_eq!(rendered.matches("{'user': ").count(), 3); // 2 records + share suffix
        assert_eq!(rendered.matches(",'text': ").count(), 2);
        let b_pos = rendered.find("{'user': B").unwrap();
        let c_pos = rendered.find("{'user': C").unwrap();
        assert!(b_pos < c_pos);
    }

    #[test]
    fn history_cap_keeps_most_recent_posts() {
        let a = agent(0, "A");
        let ctx = PromptContext::new(
            a.clone(),
            "t",
            vec![post(&a, "old"), post(&a, "newer"), post(&a, "newest")],
            vec![],
            1,
        );
        let rendered = build_prompt(&ctx);
        assert!(rendered.contains("'t': newest"));
        assert!(!rendered.contains("old"));
    }

    #[test]
    fn single_quotes_in_records_are_doubled() {
        let a = agent(0, "A");
        let b = agent(1, "B");
        let ctx = PromptContext::new(
            a,
            "t",
            vec![],
            vec![(b.clone(), post(&b, "it's fine"))],
            1,
        );
        assert!(build_prompt(&ctx).contains("'text': 'it''s fine'"));
    }

    #[test]
    fn length_grows_linearly_in_followee_posts() {
        let a = agent(0, "A");
        let mut lens = Vec::new();
        for k in 0..4usize {
            let followees: Vec<(AgentId, Post)> = (0..k)
                .map(|i| {
                    let f = agent(i as u32 + 1, "F");
                    let p = post(&f, "same size!");
                    (f, p)
                })
                .collect();
            let ctx = PromptContext::new(a.clone(), "t", vec![], followees, 1);
            lens.push(build_prompt(&ctx).len());
        }
        let deltas: Vec<usize> = lens.windows(2).map(|w| w[1] - w[0]).collect();
        assert_eq!(deltas[1], deltas[2]);
    }

    proptest! {
        #[test]
        fn prompt_is_pure_and_ends_with_the_open_quote(
            own in "[a-z ]{0,30}",
            theirs in "[a-z ]{0,30}",
        ) {
            let a = agent(0, "A");
            let b = agent(1, "B");
            let own_posts = if own.trim().is_empty() { vec![] } else { vec![post(&a, &own)] };
            let their_posts = if theirs.trim().is_empty() {
                vec![]
            } else {
                vec![(b.clone(), post(&b, &theirs))]
            };
            let ctx = PromptContext::new(a.clone(), "topic", own_posts, their_posts, 1);
            let r1 = build_prompt(&ctx);
            let r2 = build_prompt(&ctx.clone());
            prop_assert_eq!(&r1, &r2);
            prop_assert!(r1.ends_with(SHARE_TAIL));
        }
    }
}
