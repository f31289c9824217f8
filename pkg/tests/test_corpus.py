import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stateplan.corpus import (
    APPENDIX_EXEMPLARS, CorpusError, DescriptionCorpus, FeatureDimError, HashedBagOfWords, LlmClient,
    LlmClientConfig, LlmError, ParseError, PrecomputedEmbeddings, StepDescriptionSet, build_prompt, corpus_from_dict,
    corpus_to_dict, describe_steps, embed_corpus, load_corpus, mock_llm_generate, parse_llm_response,
    render_response, save_corpus, validate_descriptions,
)

BANANA_RESPONSE = """[verb]: cut
Description:
Cut banana into small pieces
Before:
- The banana is a whole.
- The banana is uncut.
- The banana is in one piece.
After:
- The banana is in small pieces.
- The banana is cut into pieces.
- The banana is divided into multiple parts.
"""

words = st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=2, max_size=8)


def make_corpus(C, K=3, seed=0):
    return describe_steps([(c, f"task {c // 4}", f"step{c} thing{c}") for c in range(C)], K=K, seed=seed)


# -- prompts -------------------------------------------------------------------

def test_prompt_contains_template_exemplars_and_query():
    p = build_prompt("Make Banana Ice Cream", "cut banana")
    assert p.startswith("First, describe the details of [step] for [goal] with one verb.\n"
                        "Second, use 3 sentences to describe the status changes of objects before and after "
                        "[step], avoiding using [verb].")
    assert "[goal]: Grill steak\n[step]: season steak\n[verb]: season" in p
    assert "[goal]: Make Kimchi Fried Rice" in p
    assert p.endswith("[step]: cut banana")


def test_prompt_without_exemplars():
    p = build_prompt("Make Banana Ice Cream", "cut banana", exemplars=())
    blocks = p.split("\n\n")
    assert len(blocks) == 2
    assert blocks[1] == "[goal]: Make Banana Ice Cream\n[step]: cut banana"


def test_prompt_is_pure():
    assert build_prompt("a task", "a step") == build_prompt("a task", "a step")


def test_prompt_rejects_empty_inputs():
    with pytest.raises(ValueError):
        build_prompt("", "cut banana")


def test_exemplars_parse_as_responses():
    for ex in APPENDIX_EXEMPLARS:
        raw = "\n".join([f"[verb]: {ex.verb}", "Description:", ex.description, "Before:",
                         *[f"- {s}" for s in ex.before], "After:", *[f"- {s}" for s in ex.after]])
        sds = parse_llm_response(raw)
        assert sds.before == ex.before and sds.after == ex.after


# -- parsing -------------------------------------------------------------------

def test_parse_banana_example():
    sds = parse_llm_response(BANANA_RESPONSE, K=3, task="Make Banana Ice Cream", step="cut banana")
    assert sds.verb == "cut"
    assert "The banana is uncut." in sds.before
    assert sds.step_description == "Cut banana into small pieces"
    # the example answer itself leaks the verb in one after-sentence
    assert validate_descriptions(sds) == ["after[1]: uses the verb 'cut': 'The banana is cut into pieces.'"]


def test_parse_wrong_bullet_count_names_section():
    raw = BANANA_RESPONSE.replace("- The banana is divided into multiple parts.\n", "")
    with pytest.raises(ParseError, match="after: expected 3, got 2"):
        parse_llm_response(raw, K=3)


def test_parse_missing_section():
    raw = BANANA_RESPONSE.split("Before:")[0]
    with pytest.raises(ParseError, match="missing section: Before"):
        parse_llm_response(raw)


def test_parse_ignores_trailing_blank_lines_and_spacing():
    messy = BANANA_RESPONSE.replace("- The banana is uncut.", "-   The  banana is   uncut.  ") + "\n\n   \n"
    assert parse_llm_response(messy) == parse_llm_response(BANANA_RESPONSE.strip())


def test_render_parse_round_trip():
    sds = parse_llm_response(BANANA_RESPONSE)
    assert parse_llm_response(render_response(sds)) == sds


# -- mock generator --------------------------------------------------------------

def test_mock_is_deterministic():
    a = mock_llm_generate("Make Banana Ice Cream", "cut banana", seed=1)
    assert a == mock_llm_generate("Make Banana Ice Cream", "cut banana", seed=1)


def test_mock_differs_between_steps():
    a = parse_llm_response(mock_llm_generate("Make Pancakes", "pour batter"))
    b = parse_llm_response(mock_llm_generate("Make Pancakes", "flip pancake"))
    assert set(a.before).isdisjoint(b.before)
    assert set(a.after).isdisjoint(b.after)


@settings(max_examples=60, deadline=None)
@given(words, words, words, st.integers(1, 6), st.integers(0, 100))
def test_mock_always_parses_and_avoids_verb(verb, obj, task, K, seed):
    raw = mock_llm_generate(f"make {task}", f"{verb} {obj}", verb=verb, K=K, seed=seed)
    sds = parse_llm_response(raw, K=K)
    assert sds.K == K
    assert len(set(sds.before)) == K and len(set(sds.after)) == K
    assert validate_descriptions(sds, K) == []


# -- corpus storage -------------------------------------------------------------

def test_corpus_round_trip(tmp_path):
    corpus = make_corpus(10)
    path = save_corpus(corpus, tmp_path / "c.json")
    assert load_corpus(path) == corpus
    # stable on-disk form
    assert path.read_text() == save_corpus(load_corpus(path), tmp_path / "d.json").read_text()


def test_corpus_with_133_classes_lists_all_ids(tmp_path):
    doc = json.loads(save_corpus(make_corpus(133), tmp_path / "c.json").read_text())
    assert [c["id"] for c in doc["classes"]] == list(range(133))
    assert doc["version"] == 1 and doc["K"] == 3


def test_missing_class_is_reported():
    doc = corpus_to_dict(make_corpus(10))
    doc["classes"] = [c for c in doc["classes"] if c["id"] != 5]
    with pytest.raises(CorpusError, match=r"missing step classes: \[5\]"):
        corpus_from_dict(doc)


def test_malformed_corpus_field_has_context(tmp_path):
    doc = corpus_to_dict(make_corpus(3))
    doc["classes"][1]["before"] = "not a list"
    with pytest.raises(CorpusError, match="before"):
        corpus_from_dict(doc)
    (tmp_path / "bad.json").write_text('{"version": 1,\n "K": 3,\n "classes": [}')
    with pytest.raises(CorpusError, match="line 3"):
        load_corpus(tmp_path / "bad.json")


def test_coverage_lists_unknown_classes():
    assert make_corpus(4).covers([0, 3, 4, 7]) == [4, 7]


# -- featurisation ----------------------------------------------------------------

def test_memory_layout():
    corpus = make_corpus(2)
    mem = embed_corpus(corpus, HashedBagOfWords(16))
    assert mem.features.shape == (12, 16)
    assert mem.row(1, "after", 2) == 11
    text = corpus[1].after[2]
    np.testing.assert_array_equal(mem.features[11], HashedBagOfWords(16)([text])[0])


def test_memory_independent_of_insertion_order():
    corpus = make_corpus(5)
    shuffled = DescriptionCorpus(dict(reversed(list(corpus.entries.items()))), K=3)
    f = HashedBagOfWords(8)
    np.testing.assert_array_equal(embed_corpus(corpus, f).features, embed_corpus(shuffled, f).features)


def test_precomputed_embeddings_round_trip_and_dim_errors(tmp_path):
    table = PrecomputedEmbeddings({"a": np.ones(4), "b": np.zeros(4)})
    table.save(tmp_path / "t.json")
    loaded = PrecomputedEmbeddings.load(tmp_path / "t.json")
    np.testing.assert_array_equal(loaded(["b", "a"]), [[0] * 4, [1] * 4])
    with pytest.raises(FeatureDimError):
        PrecomputedEmbeddings({"a": np.ones(4), "b": np.ones(3)})
    (tmp_path / "t.bin").write_bytes(b"\0" * 12)
    with pytest.raises(FeatureDimError, match="12 bytes"):
        PrecomputedEmbeddings.load(tmp_path / "t.json")


def test_hashed_features_are_deterministic_unit_vectors():
    f = HashedBagOfWords(32, seed=4)
    x = f(["The banana is uncut.", "the BANANA is uncut"])
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, rtol=1e-6)
    np.testing.assert_array_equal(x[0], x[1])


# -- LLM client ------------------------------------------------------------------

class _Handler(BaseHTTPRequestHandler):
    calls = []
    fail_first = 0
    answer = BANANA_RESPONSE

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).calls.append(body)
        if type(self).fail_first > 0:
            type(self).fail_first -= 1
            self.send_response(500)
            self.end_headers()
            return
        out = json.dumps({"choices": [{"message": {"content": type(self).answer}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    _Handler.calls, _Handler.fail_first, _Handler.answer = [], 0, BANANA_RESPONSE
    httpd = HTTPServer(("127.0.0.1", 0), _Handler)
    t = threading.Thread(target=httpd.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}/v1/chat/completions"
    httpd.shutdown()


def test_client_posts_and_caches(server, tmp_path):
    client = LlmClient(LlmClientConfig(endpoint=server, model="m", cache_dir=str(tmp_path),
                                       params={"temperature": 0.5}))
    prompt = build_prompt("Make Banana Ice Cream", "cut banana")
    assert client.complete(prompt) == BANANA_RESPONSE
    assert client.complete(prompt) == BANANA_RESPONSE
    assert len(_Handler.calls) == 1
    assert _Handler.calls[0]["temperature"] == 0.5
    assert _Handler.calls[0]["messages"][0]["content"] == prompt
    record = json.loads((tmp_path / f"{LlmClient.prompt_key(prompt)}.json").read_text())
    assert record["content"] == BANANA_RESPONSE and record["request"]["model"] == "m"


def test_client_retries_then_gives_up(server):
    _Handler.fail_first = 1
    client = LlmClient(LlmClientConfig(endpoint=server, model="m", max_retries=1))
    assert client.complete("p") == BANANA_RESPONSE
    _Handler.fail_first = 5
    with pytest.raises(LlmError, match="2 attempts"):
        LlmClient(LlmClientConfig(endpoint=server, model="m", max_retries=1)).complete("q")


def test_cache_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("SCHEMA_CACHE_DIR", str(tmp_path))
    assert LlmClientConfig(endpoint="http://x", model="m").cache_dir == str(tmp_path)
    with pytest.raises(ValueError):
        LlmClientConfig(endpoint="http://x", model="m", max_retries=-1)


def test_real_client_output_is_validated(server):
    client = LlmClient(LlmClientConfig(endpoint=server, model="m"))
    # the banana answer reuses its verb, which is a hard error for real output
    with pytest.raises(CorpusError, match="uses the verb"):
        describe_steps([(0, "Make Banana Ice Cream", "cut banana")], client=client)
    _Handler.answer = BANANA_RESPONSE.replace("- The banana is cut into pieces.", "- The banana is sliced up.")
    corpus = describe_steps([(0, "Make Banana Ice Cream", "cut banana")], client=client)
    assert corpus[0].after[1] == "The banana is sliced up."


def test_describe_steps_with_mock_is_deterministic():
    assert make_corpus(6, seed=2) == make_corpus(6, seed=2)
    assert isinstance(make_corpus(1)[0], StepDescriptionSet)
