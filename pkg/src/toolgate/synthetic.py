"""A synthetic 50-tool world for offline end-to-end runs.

Ten service domains with five tools each, templated queries with gold calls,
and a simulated model that plays three roles: a recommender that matches the
task against tool vocabulary, a query generator for corpus augmentation, and a
function caller with limited capacity. The caller answers correctly only when
every gold tool is attached and at most ``capacity`` tools are on the prompt;
a longer tool list confuses it into calling the wrong tool.
"""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass

from toolgate.augmentation import rouge_tokens
from toolgate.bench import BenchQuery, GoldCall
from toolgate.index import AugmentedQuery, ToolSpec
from toolgate.llm import ChatRequest, ScriptedLlm, ToolCall

DEFAULT_CAPACITY = 20

S, N = "string", "number"

# domain -> (shared description, [(tool, specific description, {param: type}, query template)])
DOMAINS = {
    "weather": (
        "Weather service backed by live meteorological station data for cities worldwide.",
        [
            ("get_current_weather", "Report current temperature and conditions", {"city": S},
             "what is the current temperature in {city} right now"),
            ("get_forecast", "Forecast conditions for the coming days", {"city": S, "days": N},
             "give me the forecast for {city} for the next {days} days"),
            ("get_air_quality", "Report the air quality index and pollutant levels", {"city": S},
             "how polluted is the air quality in {city} today"),
            ("get_uv_index", "Report the ultraviolet uv index and sunburn risk", {"city": S},
             "is the uv index high in {city} this afternoon"),
            ("get_weather_alerts", "List active severe storm and flood alerts", {"city": S},
             "are there any severe storm alerts for {city}"),
        ],
    ),
    "finance": (
        "Financial market tool returning quotes from exchange data feeds for listed companies and currencies.",
        [
            ("get_stock_price", "Look up the latest share price of a stock ticker", {"ticker": S},
             "what is the share price of {ticker} stock"),
            ("convert_currency", "Convert an amount of money between two currencies",
             {"amount": N, "source": S, "target": S}, "convert {amount} {source} into {target}"),
            ("get_company_news", "List recent news headlines about a company", {"ticker": S},
             "show recent news headlines about {ticker}"),
            ("get_dividend_history", "List past dividend payments of a ticker", {"ticker": S},
             "what dividends has {ticker} paid in the past"),
            ("get_market_summary", "Summarize index performance for a trading day", {"index": S},
             "summarize how the {index} index performed today"),
        ],
    ),
    "calendar": (
        "Calendar assistant tool that manages events meetings and reminders in the user's personal schedule.",
        [
            ("create_event", "Create a new event at a date", {"title": S, "date": S},
             "schedule an event called {title} on {date}"),
            ("list_events", "List the calendar events on a given date", {"date": S},
             "what events are on my calendar on {date}"),
            ("delete_event", "Cancel and delete an existing event by title", {"title": S},
             "cancel the {title} event from my calendar"),
            ("set_reminder", "Set a reminder that fires after some minutes", {"text": S, "minutes": N},
             "remind me to {task} in {minutes} minutes"),
            ("find_free_slot", "Find a free slot of a given length in minutes", {"minutes": N, "date": S},
             "find a free {minutes} minute slot on {date}"),
        ],
    ),
    "email": (
        "Email client tool that reads sends and organizes messages in the user's mailbox.",
        [
            ("send_email", "Send an email with a subject to a recipient", {"to": S, "subject": S},
             "send an email to {person} with subject {subject}"),
            ("search_email", "Search the inbox for messages matching a query", {"query": S},
             "search my inbox for messages about {topic}"),
            ("mark_as_read", "Mark a message as read by its id", {"message_id": S},
             "mark message {msgid} as read"),
            ("archive_email", "Archive a message by its id", {"message_id": S},
             "archive the email with id {msgid}"),
            ("list_unread", "List the most recent unread messages", {"limit": N},
             "list my {limit} most recent unread emails"),
        ],
    ),
    "maps": (
        "Maps navigation tool using road network and place data to plan travel between locations.",
        [
            ("get_directions", "Get driving directions from an origin to a destination",
             {"origin": S, "destination": S}, "get driving directions from {city} to {city2}"),
            ("estimate_travel_time", "Estimate how long travel takes between two places",
             {"origin": S, "destination": S}, "how long does it take to travel from {city} to {city2}"),
            ("find_nearby_places", "Find nearby places of a category around a location",
             {"category": S, "location": S}, "find nearby {place} places around {city}"),
            ("geocode_address", "Turn a street address into coordinates", {"address": S},
             "what are the coordinates of the address {street}"),
            ("get_traffic", "Report live traffic congestion on a road", {"road": S},
             "how bad is traffic congestion on {road} right now"),
        ],
    ),
    "music": (
        "Music streaming tool that controls playback and playlists in the user's music library.",
        [
            ("play_song", "Play a song by its title", {"title": S}, "play the song {song}"),
            ("pause_playback", "Pause whatever is currently playing", {},
             "pause the music that is currently playing"),
            ("create_playlist", "Create a new empty playlist with a name", {"name": S},
             "create a new playlist named {listname}"),
            ("add_to_playlist", "Add a song to an existing playlist", {"song": S, "playlist": S},
             "add {song} to my {listname} playlist"),
            ("search_artist", "Find songs by an artist", {"artist": S}, "find songs by the artist {artist}"),
        ],
    ),
    "files": (
        "File storage tool that operates on documents and folders in the user's cloud drive.",
        [
            ("open_file", "Open a document from a path", {"path": S}, "open the document {path}"),
            ("print_document", "Print copies of a document", {"path": S, "copies": N},
             "print {copies} copies of the document {path}"),
            ("share_file", "Share a file with another person by email", {"path": S, "email": S},
             "share the file {path} with {person}"),
            ("delete_file", "Delete a file permanently", {"path": S}, "delete the file {path} from my drive"),
            ("create_folder", "Create a new folder with a name", {"name": S},
             "create a new folder called {listname}"),
        ],
    ),
    "translation": (
        "Language translation tool powered by a neural model supporting dozens of languages.",
        [
            ("translate_text", "Translate text into a target language", {"text": S, "target_language": S},
             "translate the phrase {phrase} into {language}"),
            ("detect_language", "Detect which language a text is written in", {"text": S},
             "detect which language the phrase {phrase} is written in"),
            ("list_languages", "List every supported language", {}, "list every language you support"),
            ("transliterate_text", "Transliterate text into another script", {"text": S, "script": S},
             "transliterate the phrase {phrase} into {script} script"),
            ("define_word", "Define the meaning of a word in a language", {"word": S, "language": S},
             "define the meaning of the word {word} in {language}"),
        ],
    ),
    "shopping": (
        "Online shopping tool that searches a retail catalog and manages the user's cart and orders.",
        [
            ("search_products", "Search the catalog for products", {"query": S},
             "search the store catalog for {product}"),
            ("add_to_cart", "Add a quantity of a product to the cart", {"product_id": S, "quantity": N},
             "add {quantity} of product {sku} to my cart"),
            ("track_order", "Track the delivery status of an order", {"order_id": S},
             "track the delivery of my order {order}"),
            ("get_product_reviews", "Show customer reviews for a product", {"product_id": S},
             "show customer reviews for product {sku}"),
            ("apply_coupon", "Apply a coupon code at checkout", {"code": S},
             "apply the coupon code {coupon} at checkout"),
        ],
    ),
    "fitness": (
        "Fitness tracker tool that records workouts steps sleep and health metrics from the user's wearable.",
        [
            ("log_workout", "Log a workout activity with its duration in minutes", {"activity": S, "minutes": N},
             "log a {minutes} minute {activity} workout"),
            ("get_step_count", "Count the steps walked on a date", {"date": S},
             "how many steps did I walk on {date}"),
            ("get_sleep_summary", "Summarize sleep quality for a night", {"date": S},
             "how well did I sleep on the night of {date}"),
            ("get_heart_rate", "Read the current heart rate", {}, "what is my current heart rate"),
            ("set_step_goal", "Set the daily step goal", {"steps": N}, "set my daily step goal to {steps}"),
        ],
    ),
}

_SLOTS = {
    "city": ["Paris", "Tokyo", "Lima", "Oslo", "Cairo", "Denver", "Madrid", "Seoul", "Nairobi", "Perth"],
    "city2": ["Berlin", "Boston", "Quito", "Dublin", "Hanoi", "Austin", "Lisbon", "Osaka", "Accra", "Sydney"],
    "days": [2, 3, 4, 5, 7, 10],
    "ticker": ["AAPL", "MSFT", "NVDA", "TSLA", "AMZN", "IBM", "ORCL", "INTC"],
    "amount": [10, 25, 100, 250, 1200, 75],
    "source": ["USD", "EUR", "GBP", "JPY"],
    "target": ["CHF", "CAD", "AUD", "INR"],
    "index": ["NASDAQ", "DAX", "FTSE", "NIKKEI", "CAC"],
    "title": ["standup", "retro", "offsite", "dentist", "lunch", "review", "planning"],
    "date": ["2024-03-01", "2024-04-12", "2024-05-20", "2024-06-30", "2024-07-04", "2024-08-15"],
    "task": ["stretch", "hydrate", "call-mom", "water-plants", "submit-invoice"],
    "minutes": [15, 20, 30, 45, 60, 90],
    "person": ["alice@example.com", "bob@example.com", "carol@example.com", "dan@example.com"],
    "subject": ["budget", "roadmap", "invoice", "holiday", "update"],
    "topic": ["invoices", "travel", "contracts", "hiring", "refunds"],
    "msgid": ["m-1042", "m-2210", "m-3307", "m-4471", "m-5590"],
    "limit": [3, 5, 10, 20],
    "place": ["coffee", "pharmacy", "museum", "parking", "bakery"],
    "street": ["221B-Baker-Street", "10-Downing-Street", "1600-Amphitheatre-Parkway", "350-Fifth-Avenue"],
    "road": ["I-95", "A1", "M25", "Route-66", "Ring-Road"],
    "song": ["Yesterday", "Hallelujah", "Clocks", "Starman", "Jolene", "Vogue"],
    "listname": ["roadtrip", "focus", "workout-mix", "archive-2023", "receipts"],
    "artist": ["Bowie", "Adele", "Coldplay", "Beyonce", "Radiohead"],
    "path": ["report.pdf", "notes.txt", "slides.pptx", "budget.xlsx", "thesis.docx"],
    "copies": [1, 2, 3, 5],
    "phrase": ["good-morning", "thank-you", "see-you-soon", "where-is-the-station"],
    "language": ["French", "Japanese", "Swahili", "German", "Spanish"],
    "script": ["Cyrillic", "Latin", "Devanagari", "Hangul"],
    "word": ["serendipity", "ubuntu", "hygge", "saudade"],
    "product": ["headphones", "kettles", "backpacks", "desk-lamps"],
    "sku": ["P-100", "P-220", "P-315", "P-408", "P-512"],
    "quantity": [1, 2, 3, 4],
    "order": ["O-7781", "O-8812", "O-9923", "O-1034"],
    "coupon": ["SAVE10", "SPRING25", "FREESHIP", "WELCOME5"],
    "activity": ["running", "cycling", "rowing", "yoga", "swimming"],
    "steps": [6000, 8000, 10000, 12000],
}

# template slot -> tool argument name, where they differ
_ARG_FOR_SLOT = {
    "city2": "destination", "task": "text", "person": None, "topic": "query", "msgid": "message_id",
    "place": "category", "street": "address", "song": None, "listname": None, "phrase": "text",
    "product": "query", "sku": "product_id", "language": None, "order": "order_id", "coupon": "code",
}

_VAGUE = [
    "can you sort that thing out for me",
    "do the usual please",
    "handle it the same way as last time",
    "I need some help with this",
    "take care of it before tonight",
    "whatever works best here",
    "fix it like we discussed",
    "just make it happen",
    "same as yesterday thanks",
    "you know what to do",
]


def build_tools() -> list[ToolSpec]:
    tools = []
    for domain, (shared, entries) in DOMAINS.items():
        for name, specific, params, _ in entries:
            schema = {"type": "object", "properties": {p: {"type": t} for p, t in params.items()},
                      "required": list(params)}
            tools.append(ToolSpec(name, name, f"{specific}. {shared}", schema))
    return tools


def _template_args(tool_params: dict, template: str, values: dict) -> dict:
    """Map filled template slots onto the tool's argument names."""
    args = {}
    slots = re.findall(r"{(\w+)}", template)
    for slot in slots:
        arg = _ARG_FOR_SLOT.get(slot, slot)
        if arg is None:
            arg = _slot_target(tool_params, slot, args)
        if arg in tool_params:
            args[arg] = values[slot]
    if "city" in slots and "origin" in tool_params:
        args["origin"] = values["city"]
    if "location" in tool_params and "city" in slots:
        args["location"] = values["city"]
    return args


def _slot_target(tool_params, slot, taken):
    candidates = {"person": ("to", "email"), "song": ("title", "song"), "listname": ("name", "playlist"),
                  "language": ("target_language", "language")}[slot]
    return next((c for c in candidates if c in tool_params and c not in taken), candidates[0])


def _fill(rng: random.Random, template: str) -> dict:
    return {slot: rng.choice(_SLOTS[slot]) for slot in re.findall(r"{(\w+)}", template)}


_LEAD_INS = ("", "", "please", "hey", "quick one:", "could you", "I wonder,", "right now,")


def _tool_query(rng, domain, entry):
    name, _, params, template = entry
    values = _fill(rng, template)
    text = f"{rng.choice(_LEAD_INS)} {template.format(**values)}".strip()
    return text, GoldCall(name, _template_args(params, template, values))


def training_set(per_tool: int = 5, seed: int = 0, domains=None) -> list[AugmentedQuery]:
    """Labelled queries, ``per_tool`` for every tool; category is the domain."""
    rng = random.Random(seed)
    out, seen = [], set()
    for domain in domains or DOMAINS:
        for entry in DOMAINS[domain][1]:
            made = 0
            for _ in range(per_tool * 20):
                if made == per_tool:
                    break
                text, gold = _tool_query(rng, domain, entry)
                if text in seen:
                    continue
                seen.add(text)
                out.append(AugmentedQuery(f"{domain}-{len(out):03d}", text, domain, (gold.tool_name,), "seed"))
                made += 1
    return out


def benchmark(per_tool: int = 4, compound: int = 20, vague: int = 10, seed: int = 1) -> list[BenchQuery]:
    """Single-tool queries, two-step queries that span domains, and a few
    underspecified requests that no recommender can ground."""
    rng = random.Random(seed)
    queries, seen = [], set()

    def add(text, calls, category, sequential=False):
        if text in seen:
            return False
        seen.add(text)
        queries.append(BenchQuery(f"q{len(queries):03d}", text, category, tuple(calls), sequential))
        return True

    for domain, (_, entries) in DOMAINS.items():
        for entry in entries:
            made = 0
            for _ in range(per_tool * 50):
                if made == per_tool:
                    break
                text, gold = _tool_query(rng, domain, entry)
                made += add(text, [gold], domain)
    names = list(DOMAINS)
    while compound > 0:
        d1, d2 = rng.sample(names, 2)
        t1, g1 = _tool_query(rng, d1, rng.choice(DOMAINS[d1][1]))
        t2, g2 = _tool_query(rng, d2, rng.choice(DOMAINS[d2][1]))
        compound -= add(f"{t1} and then {t2}", [g1, g2], "compound", sequential=True)
    for text in _VAGUE[:vague]:
        domain = rng.choice(names)
        name, _, params, template = rng.choice(DOMAINS[domain][1])
        add(text, [GoldCall(name, _template_args(params, template, _fill(rng, template)))], "vague")
    return queries


# --- simulated model ------------------------------------------------------

_STOP = frozenset("a an the of to in on for by is are what my me i and then with from at this how it".split())
GENERIC_TOOL = {"name": "general_helper", "description": "Handle a general request that needs no special capability."}


@dataclass
class SimulatedModel:
    tools: list
    oracle: dict  # query text -> list of GoldCall
    capacity: int = DEFAULT_CAPACITY

    def __post_init__(self):
        self._vocab = {t.name: set(rouge_tokens(t.name.replace("_", " ") + " " + t.description.split(".")[0]))
                       - _STOP for t in self.tools}
        self._by_name = {t.name: t for t in self.tools}

    # recommender role
    def recommend(self, task: str) -> str:
        ideal = []
        for part in re.split(r"\band then\b", task):
            words = set(rouge_tokens(part)) - _STOP
            best, overlap = None, 0
            for name, vocab in self._vocab.items():
                n = len(words & vocab)
                if n > overlap:
                    best, overlap = name, n
            if best is None:
                ideal.append(GENERIC_TOOL)
                continue
            specific, _, domain = self._by_name[best].description.partition(". ")
            ideal.append({"name": best, "description": f"{specific} as a {domain[0].lower()}{domain[1:]}"})
        return json.dumps({"tools": ideal})

    # generator role: two usable variants and one near-duplicate per seed
    def generate(self, query: str, tools: list[str], n: int) -> str:
        words = query.split()
        variants = [
            {"text": f"could you please {query}", "tools": tools},
            {"text": " ".join(words[2:] + ["for", "me"]) if len(words) > 3 else f"{query} now", "tools": tools},
            {"text": query, "tools": tools},
        ]
        return json.dumps({"variants": variants[:max(n, 0)]})

    # caller role
    def call(self, query: str, attached: list[str]):
        gold = self.oracle.get(query)
        if gold is None:
            return json.dumps({"error": "request not understood"})
        if len(attached) > self.capacity:
            wrong = next((t for t in attached if t not in {g.tool_name for g in gold}), attached[0])
            return [ToolCall(wrong, {})]
        if all(g.tool_name in attached for g in gold):
            return [ToolCall(g.tool_name, dict(g.arguments)) for g in gold]
        return json.dumps({"error": "no suitable tool attached"})

    def respond(self, request: ChatRequest):
        user = next(m["content"] for m in reversed(request.messages) if m["role"] == "user")
        if request.tools:
            return self.call(user, request.tool_names)
        example = re.search(r"^Example query: (.*)$", user, re.M)
        if example:
            used = re.search(r"^Tools used: (.*)$", user, re.M)
            count = re.search(r"^Write (\d+) new queries", user, re.M)
            tools = [t.strip() for t in used.group(1).split(",")] if used else []
            return self.generate(example.group(1).strip(), tools, int(count.group(1)) if count else 3)
        task = re.search(r"^Task: (.*)$", user, re.M)
        return self.recommend(task.group(1).strip() if task else user.strip().splitlines()[-1])


def simulated_llm(tools=None, bench=None, capacity: int = DEFAULT_CAPACITY) -> ScriptedLlm:
    """A request-logging mock backed by :class:`SimulatedModel`."""
    tools = tools if tools is not None else build_tools()
    bench = bench if bench is not None else benchmark()
    model = SimulatedModel(list(tools), {q.text: list(q.gold_calls) for q in bench}, capacity)
    llm = ScriptedLlm(rules=[(lambda request: True, model.respond)])
    llm.model = model
    return llm
