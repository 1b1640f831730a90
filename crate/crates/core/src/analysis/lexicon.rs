//! Small built-in verb and noun lexicons for the verb–object heuristic.

pub const VERBS: &[&str] = &[
    "add", "adjust", "analyze", "answer", "apply", "arrange", "assess", "assign", "build", "calculate",
    "categorize", "change", "check", "choose", "classify", "combine", "compare", "compile", "complete",
    "compose", "compute", "construct", "convert", "correct", "count", "craft", "create", "debug", "decide",
    "define", "derive", "describe", "design", "detect", "determine", "develop", "devise", "discuss",
    "draft", "edit", "estimate", "evaluate", "explain", "express", "extract", "fill", "find", "fix",
    "format", "formulate", "generate", "give", "guess", "highlight", "identify", "illustrate", "implement",
    "improve", "infer", "interpret", "invent", "label", "list", "make", "match", "measure", "name",
    "offer", "order", "organize", "outline", "paraphrase", "pick", "plan", "predict", "prepare",
    "present", "produce", "propose", "provide", "rank", "rate", "recommend", "reorder", "rephrase",
    "replace", "report", "rewrite", "select", "share", "simplify", "solve", "sort", "state", "suggest",
    "summarize", "tell", "transform", "translate", "turn", "use", "verify", "write",
];

pub const NOUNS: &[&str] = &[
    "abstract", "activity", "ad", "advantage", "advertisement", "advice", "algorithm", "analogy",
    "analysis", "animal", "answer", "argument", "article", "aspect", "benefit", "biography", "blog",
    "book", "budget", "bug", "caption", "cause", "character", "chart", "city", "code", "color",
    "comment", "comparison", "complaint", "concept", "conversation", "country", "day", "definition",
    "description", "dialogue", "difference", "dish", "email", "equation", "error", "essay", "event",
    "example", "excuse", "explanation", "fact", "feature", "film", "food", "formula", "function",
    "game", "gift", "goal", "haiku", "headline", "hobby", "idea", "image", "instruction", "interview",
    "invitation", "item", "joke", "language", "letter", "limerick", "list", "logo", "lyric", "meal",
    "menu", "message", "metaphor", "method", "movie", "name", "news", "note", "number", "opinion",
    "outline", "paragraph", "party", "person", "phrase", "place", "plan", "plot", "poem", "point",
    "policy", "post", "problem", "product", "program", "proof", "proposal", "question", "quiz", "quote",
    "reason", "recipe", "recommendation", "reply", "report", "response", "resume", "review", "riddle",
    "rule", "school", "season", "sentence", "sentiment", "sequence", "slogan", "solution", "song",
    "speech", "sport", "statement", "step", "story", "strategy", "string", "summary", "synonym",
    "table", "tagline", "task", "temperature", "text", "theme", "thing", "tip", "title", "tool",
    "topic", "tweet", "type", "way", "website", "word",
];
