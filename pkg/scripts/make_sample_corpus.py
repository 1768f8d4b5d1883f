#!/usr/bin/env python3
"""Generate the bundled sample corpus deterministically.

Produces ~200KB of synthetic English-like prose from fixed word banks with
Zipfian frequencies, topic-conditioned paragraphs, proper names, digits, and
varied sentence templates. The output is a pure function of the seed, so the
file can be regenerated bit for bit; it is original generated text and
carries no license restrictions.

The text is deliberately harder than simple template prose: word banks are
large and flat enough that next-character distributions stay genuinely
uncertain at word boundaries, and each paragraph draws most of its content
words from one topic slice, a long-range regularity that rewards model
capacity. This keeps a visible quality gap between large and small models
trained on the sample, which the distillation experiments rely on.

Usage: python3 scripts/make_sample_corpus.py [out_path]
"""

import sys

import numpy as np

TARGET_BYTES = 200_000
SEED = 20240517

NOUNS = """river stone garden letter window harbor winter candle forest meadow
bridge shadow market farmer sailor teacher student doctor mountain valley
storm lantern journey morning evening village city road house door table
chair book page story song bird tree leaf branch root flower field grain
boat wave shore cloud rain snow fire smoke ash iron copper silver glass
wheel rope knot map coast island tower bell clock street corner yard wall
gate key lock box chest coat hat shoe glove thread needle loom wool
bread salt honey apple pear plum grape barrel cart horse ox dog cat hen
egg milk cheese knife spoon bowl cup jug well spring brook pond lake
dozen breeze blaze quarry puzzle jacket axle anchor ballad beacon bucket
canvas cellar chapel chimney cobbler compass cradle crate dagger ditch
drum dune easel engine fable ferry fiddle flask forge fountain furrow
gallows gazette glacier granary grove gutter hammock harness hearth hedge
helm hillside hinge hollow hymn icicle inkwell ivory jetty keel kiln
ladder lace ledger lighthouse locket lumber mantle marsh mast mill
miller mineral mosaic moss notch oar orchard organ paddle pantry parapet
parchment pasture pebble pedal pillar pine pitcher plank plough porch
priory prow pulley quill raft rafter ravine reed ribbon ridge rudder
saddle satchel saw scaffold schooner scythe shearer shed shingle shutter
sickle skiff slate sled smith spade spire splinter spool stable staircase
stallion steeple stile stove strand straw summit sundial tanner tapestry
tavern thatch thicket thimble timber tinder tractor trellis trough trowel
tunnel turret twine vane vault vessel vineyard wagon walnut weir wharf
windmill yoke abbot almanac antler apron attic auger awl badger bale
banner bassoon bat beech beetle bellows birch blacksmith bobbin bonfire
borough bramble brewery brine bronze buckle bugle bullock buttress cairn
calf cape cask causeway chalk chisel cider cinder clay cliff clover colt
comb coop cork cove crag creek crore crow cypress dam deer dill dough
dovecote drake dray eel elm ember ewer falcon fawn fern filly firth
flint foal fodder fog fox frigate frost furlong gale gander gargoyle
garland garret gorse gosling granite grouse gull gust hail hare hawk
hazel heath heron hive hoe hound ibex inlet isle jay juniper kestrel
kite lark latch lily lime linen loaf lode lodge magpie mallet maple
mare marble mead mole moor moth mule myrrh nettle newt oak oat orece
osprey otter owl paddock pail peat perch pheasant pier pigeon pike
pinecone pippin plover pollen poppy quail quay quern ram raven reef rye
saffron sage salmon sapling seal shale shoal shrew silt sloop snail
sorrel sparrow spruce squire stoat stork swan tarn teal tern thistle
thorn thrush tide toad trout tulip vole walrus wasp weasel willow wren""".split()

VERBS = """carried watched opened closed followed crossed gathered planted
built mended traded counted measured weighed lifted lowered turned folded
painted cleaned washed dried warmed cooled filled emptied found lost kept
sold bought borrowed returned wrote read sang told heard saw met left
reached passed entered visited remembered forgot promised refused offered
accepted repaired replaced moved placed raised settled studied taught
learned finished started continued stopped waited rested walked rode
anchored argued bargained bartered beached bellowed blessed boiled
braided branded brewed bridged buried burnished buttressed calmed
carved charted cheered chiselled coaxed cobbled coiled combed
cornered crowned cupped cured dammed dangled dared dazzled deciphered
dodged doubted dozed dragged drained dredged drummed dusted echoed
etched fanned fastened fenced ferried fetched flattened flooded fluttered
forged framed gilded girdled gleaned glimpsed grafted greeted grinned
groomed guarded guided halted hammered harvested hauled heaped heated
herded hoarded hoisted hummed hushed inked jolted jostled kindled
kneaded knotted lashed latched leased loaded looped lugged mapped
marched marked milked mingled moored mowed muttered nailed netted
nudged numbered paced packed paddled pardoned parted patched paved
pawned peeled penned pickled pinched pitched plaited pledged plucked
polished pondered posted pounded praised pressed pried pruned quarried
queued quilted raked rambled ransomed rationed reckoned reeled rigged
rinsed roamed roasted rowed rustled salted sanded scattered scoured
scrawled sculpted seasoned sharpened sheared shelved shipped shod
shouldered shovelled shuffled signalled sketched skimmed smelted smoothed
snared soaked soldered sorted sowed spliced sponged spun stacked staked
stamped steered stitched stoked stored strained strapped strode stuffed
surveyed swapped sweetened tallied tamed tarred tethered thatched threshed
tilled timbered tinkered toasted towed traced trampled trimmed trudged
tucked tuned twisted unfurled unloaded varnished vaulted ventured waded
wandered weathered weeded wheeled whittled winched winnowed wintered""".split()

ADJS = """old young small large quiet busy bright dark heavy light narrow
wide warm cold dry wet clean worn plain fine rough smooth early late deep
shallow distant nearby steady gentle sudden careful patient honest clever
tired eager calm restless familiar strange ordinary rare simple lazy hazy
dizzy frozen exact vexed quick amber ancient ashen bitter bleak blunt
brackish brisk broad bronze charred chilly coarse copper crooked crisp
curved dappled dusty faded faint feeble fierce flat fragrant gaunt
gilded glassy gnarled golden grassy grim gritty hardy hollow humble
icy idle ivory jagged keen knotted leaden limp lively loyal lucid
marbled mellow mild misty mossy muddy murky musty nimble oaken olive
pale peppery polished prickly proud quaint ragged rainy rigid ripe
rusty sable salty sandy scarlet shady sharp silent silken sleek slender
sly snug soggy solemn sour spare sparse spent spiced stark stern sticky
stout stubborn sturdy sunlit swift tangled tart tawny thorny thrifty
tidy timid tranquil twisted uneven vivid wary weary wild windy wiry
woolen wrinkled""".split()

ADVS = """slowly quickly quietly carefully often rarely always sometimes
finally suddenly gently patiently early late together alone again soon
abruptly barely briskly calmly cheerfully daily deftly dimly eagerly
evenly faintly fondly gravely grimly halfway hastily idly keenly
lightly meekly neatly nightly oddly politely promptly roughly shyly
silently smoothly softly solemnly soundly sternly stiffly swiftly
tenderly thrice twice warily wearily wholly widely wildly""".split()

NAMES = """Abram Agatha Alder Almira Ansel Arlo Asta Aurelia Barnaby Basil
Beatrix Bert Blythe Boaz Briar Bruno Casimir Cedric Clemency Colm Cora
Cyrus Dahlia Darius Delphine Dmitri Edda Edmund Eleri Elias Elspeth
Ember Enoch Esra Fabian Fenella Fergus Fiora Flann Florian Freya Gideon
Gilda Gregor Greta Hadley Hamish Harriet Hector Hester Hollis Hugo Ida
Ignatius Imogen Inga Isadora Ivo Jasper Jemima Jerome Jocasta Jonas
Josiah Jubal Keziah Lachlan Laila Lemuel Leona Linus Lorcan Lucasta
Magnus Maren Marisol Matthias Mehetabel Mirela Mordecai Nadia Nathaniel
Nerissa Obadiah Odette Olwen Orla Osric Ottoline Peregrine Petra Phineas
Quilla Quentin Rafferty Romilly Rosalind Rufus Sabina Saul Seraphina
Sholto Sibyl Silas Sorcha Tabitha Tamsin Teodor Thaddeus Thea Tobias
Una Ursula Vasily Verity Wilfred Winifred Xanthe Yannick Ysolde Zebedee""".split()

PLACES = [
    "near the river",
    "beside the road",
    "across the bridge",
    "behind the mill",
    "under the oak",
    "along the shore",
    "within the walls",
    "beyond the hills",
    "at the market",
    "by the harbor",
    "in the valley",
    "over the pass",
    "through the gate",
    "past the weir",
    "below the cliffs",
    "inside the granary",
    "around the headland",
    "above the orchard",
    "against the sea wall",
    "between the hedgerows",
    "outside the old priory",
    "amid the dunes",
    "atop the ridge",
    "down the towpath",
]

CONNECTORS = [
    "and", "but", "so", "while", "because", "although", "before", "after",
    "until", "unless", "whenever", "whereas", "since", "yet",
]

SAID = ["said", "murmured", "replied", "called", "remarked", "warned",
        "whispered", "declared", "admitted", "insisted"]

UNITS = ["barrels", "bushels", "crates", "sacks", "coils", "bales", "casks",
         "bolts", "cords", "spools", "flagons", "leagues", "fathoms",
         "furlongs", "acres", "paces", "winters", "seasons", "voyages"]

N_TOPICS = 8
TOPIC_STICKINESS = 0.6  # prob a content word comes from the paragraph topic slice


def zipf_weights(n, a):
    ranks = np.arange(1, n + 1, dtype=np.float64)
    w = ranks**-a
    return w / w.sum()


class Banks:
    """Topic-sliced word banks with Zipfian sampling."""

    def __init__(self, rng):
        self.rng = rng
        self.banks = {}
        for key, words, a in (
            ("noun", NOUNS, 0.85),
            ("verb", VERBS, 0.85),
            ("adj", ADJS, 0.9),
            ("adv", ADVS, 0.9),
            ("name", NAMES, 0.7),
        ):
            order = rng.permutation(len(words))
            shuffled = [words[i] for i in order]
            self.banks[key] = (shuffled, zipf_weights(len(words), a))

    def word(self, key, topic=None):
        words, w = self.banks[key]
        if topic is not None and self.rng.random() < TOPIC_STICKINESS:
            # each topic owns a contiguous slice; slices overlap halfway
            size = max(8, len(words) // (N_TOPICS // 2))
            start = (topic * len(words) // N_TOPICS) % len(words)
            idx = (start + self.rng.choice(size, p=zipf_weights(size, 0.8))) % len(words)
            return words[idx]
        return words[self.rng.choice(len(words), p=w)]


def noun_phrase(rng, banks, topic, allow_name=True):
    r = rng.random()
    if allow_name and r < 0.18:
        return banks.word("name", topic)
    if allow_name and r < 0.28:
        return f"{banks.word('name', topic)}'s {banks.word('noun', topic)}"
    det = "the" if rng.random() < 0.75 else "a"
    parts = [det]
    if rng.random() < 0.4:
        parts.append(banks.word("adj", topic))
    parts.append(banks.word("noun", topic))
    return " ".join(parts)


def list_phrase(rng, banks, topic):
    n = int(rng.integers(2, 4))
    items = [noun_phrase(rng, banks, topic, allow_name=False) for _ in range(n)]
    if n == 2:
        return f"{items[0]} and {items[1]}"
    return f"{items[0]}, {items[1]}, and {items[2]}"


def clause(rng, banks, topic):
    subj = noun_phrase(rng, banks, topic)
    verb = banks.word("verb", topic)
    r = rng.random()
    if r < 0.12:
        obj = list_phrase(rng, banks, topic)
    elif r < 0.2:
        count = int(rng.integers(2, 240))
        obj = f"{count} {UNITS[rng.integers(0, len(UNITS))]} of {banks.word('noun', topic)}"
    else:
        obj = noun_phrase(rng, banks, topic)
    parts = [subj, verb, obj]
    if rng.random() < 0.18:
        parts.append(
            f"that {banks.word('name', topic)} {banks.word('verb', topic)}"
        )
    if rng.random() < 0.3:
        parts.append(banks.word("adv"))
    if rng.random() < 0.38:
        parts.append(PLACES[rng.integers(0, len(PLACES))])
    return " ".join(parts)


def sentence(rng, banks, topic):
    r = rng.random()
    if r < 0.08:
        inner = clause(rng, banks, topic)
        name = banks.word("name", topic)
        verb = SAID[rng.integers(0, len(SAID))]
        s = f'"{inner[0].upper() + inner[1:]}," {verb} {name}'
        if rng.random() < 0.3:
            s += " " + banks.word("adv")
        return s + "."
    s = clause(rng, banks, topic)
    if rng.random() < 0.2:
        s = banks.word("adv") + ", " + s
    joiner = rng.random()
    if joiner < 0.3:
        s += f" {CONNECTORS[rng.integers(0, len(CONNECTORS))]} " + clause(rng, banks, topic)
    elif joiner < 0.38:
        s += "; " + clause(rng, banks, topic)
    if rng.random() < 0.05:
        s += f" ({banks.word('adv')} {banks.word('verb', topic)})"
    end = "." if rng.random() < 0.88 else ("?" if rng.random() < 0.5 else "!")
    return s[0].upper() + s[1:] + end


def main(out_path="data/sample_corpus.txt"):
    rng = np.random.default_rng(SEED)
    banks = Banks(rng)
    chunks = []
    size = 0
    while size < TARGET_BYTES:
        topic = int(rng.integers(0, N_TOPICS))
        para = " ".join(
            sentence(rng, banks, topic) for _ in range(int(rng.integers(3, 8)))
        )
        chunks.append(para)
        size += len(para) + 2
    text = "\n\n".join(chunks) + "\n"
    with open(out_path, "w", newline="\n") as f:
        f.write(text)
    data = text.encode()
    print(f"{out_path}: {len(data)} bytes, {len(set(data))} distinct")


if __name__ == "__main__":
    main(*sys.argv[1:])
