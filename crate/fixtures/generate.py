"""Regenerates the toy fixtures. Requires `pypinyin`.

Domain A is formal news-style text; domain B is colloquial chat that reuses
the pinyin of several domain-A words with different characters.
"""
import itertools
import random

from pypinyin import Style, pinyin

rng = random.Random(20190722)

# --- syllable inventory ---------------------------------------------------
sylls = set()
for cp in range(0x4E00, 0xA000):
    for group in pinyin(chr(cp), heteronym=True, style=Style.NORMAL, errors="ignore"):
        for s in group:
            if s.isascii() and s.isalpha() and s.islower() and len(s) <= 6 and any(v in s for v in "aeiouv"):
                sylls.add(s)

# --- domain A -------------------------------------------------------------
a_subj = ["政府", "国家", "专家", "教授", "代表", "我们", "人民", "学校", "公司", "科学家"]
a_adv = ["正在", "已经", "将要", "认真", "积极", "继续"]
a_verb = ["研究", "支援", "鉴定", "提出", "发展", "保护", "讨论", "完成", "报告", "分析"]
a_obj = ["实验", "公式", "背景", "权利", "权力", "实力", "友谊", "理智", "幻影", "经济", "技术", "问题", "计划", "方案", "数据"]
a_other = ["其实", "了", "的", "很", "重要"]
# The homophones 权利/权力 (quan li) follow collocations instead of a coin
# flip so that context decides between them: 权力 only after these verbs,
# 权利 everywhere else.
power_verbs = {"发展", "分析", "报告"}


def a_obj_after(verb):
    o = rng.choice(a_obj)
    if o in ("权利", "权力"):
        o = "权力" if verb in power_verbs else "权利"
    return o


def a_sentence():
    t = rng.randrange(5)
    s, adv, v = rng.choice(a_subj), rng.choice(a_adv), rng.choice(a_verb)
    o = a_obj_after(v)
    if t == 0:
        return s + adv + v + o
    if t == 1:
        return s + v + "了" + o + "的" + a_obj_after(None)
    if t == 2:
        return "其实" + s + adv + v + o
    if t == 3:
        v2 = rng.choice(a_verb)
        return s + adv + v + o + "，" + rng.choice(a_subj) + v2 + a_obj_after(v2)
    return s + "的" + a_obj_after(None) + "很重要"


def unique(gen, n, taken):
    out = []
    while len(out) < n:
        x = gen()
        if x not in taken:
            taken.add(x)
            out.append(x)
    return out


taken = set()
train = unique(a_sentence, 200, taken)
test_a = unique(a_sentence, 60, taken)

# --- domain B -------------------------------------------------------------
b_subj = ["我", "你", "他", "大家", "朋友", "我们"]
b_adv = ["很", "真的", "也", "都"]
b_verb = ["喜欢", "想去", "记得", "需要"]
b_obj = ["北京", "誓言", "公事", "启示", "视力", "志愿"]
b_adj = ["励志", "坚定", "有益"]


def b_sentence():
    t = rng.randrange(4)
    s = rng.choice(b_subj)
    if t == 0:
        return s + rng.choice(b_adv) + rng.choice(b_verb) + rng.choice(b_obj)
    if t == 1:
        return "欢迎" + s + "来北京"
    if t == 2:
        return s + "的" + rng.choice(b_obj) + rng.choice(b_adv) + rng.choice(b_adj)
    return s + rng.choice(b_adv) + rng.choice(b_adj) + "，" + "欢迎来北京"


domain_b = unique(b_sentence, 80, set())

# --- dictionary -------------------------------------------------------------
table1 = "被北呗杯背敬静井京经环换还幻欢英颖迎影应你睨逆拟尼长"
chars = sorted(set("".join(train + test_a + domain_b) + table1) - set("，"))
overrides = {"长": ["chang", "zhang"], "还": ["huan", "hai"]}
dict_rows = []
for c in chars:
    prons = overrides.get(c)
    if prons is None:
        prons = []
        for p in pinyin(c, heteronym=True, style=Style.NORMAL)[0]:
            if p in sylls and p not in prons:
                prons.append(p)
    dict_rows.append(c + "\t" + " ".join(prons))

lexicon = sorted(set(a_subj + a_adv + a_verb + a_obj + a_other))

def write(name, lines):
    with open(name, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")

write("syllables.txt", sorted(sylls))
write("dict.tsv", dict_rows)
write("lexicon.txt", lexicon)
write("train.txt", train)
write("test_a.txt", test_a)
write("domain_b.txt", domain_b)
