"""Regenerates posts.jsonl and comments.jsonl for the offline end-to-end run."""
import json
import random

rng = random.Random(50)

POSTS = [
    ("HARRIS", "Get out and vote this November because every single voice in this country matters for our shared future"),
    ("HARRIS", "We delivered the largest investment in clean energy and created thousands of good jobs across the country"),
    ("HARRIS", "Join us tonight at the rally in Atlanta where we will talk about the road ahead for working families"),
    ("HARRIS", "I believe that freedom means the right to make decisions about your own life without the government in the way"),
    ("HARRIS", "Make sure you are registered to vote and have a plan for how you will get to the polls on election day"),
    ("HARRIS", "Together we passed the bipartisan infrastructure law and built new bridges and roads in every state"),
    ("TRUMP", "We will bring back the jobs and make this country strong again with lower prices and secure borders"),
    ("TRUMP", "Watch my interview tonight where I talk about the economy and what we are going to do for the people"),
    ("TRUMP", "Our policy will cut taxes for the middle class and protect the values that made this country great"),
    ("TRUMP", "Thank you to everyone who came out to the rally in Pennsylvania last night, what an amazing crowd it was"),
    ("HARRIS", "The record shows we achieved historic progress on health care costs for seniors and their families"),
    ("TRUMP", "Register today and vote early because this is the most important election of our lifetime for the country"),
    ("HARRIS", "Our future depends on the rights we protect today and on the people who show up to defend them"),
    ("TRUMP", "We built the strongest economy in history and we will do it again for every family in this country"),
]

AGREE_FAVOR = [
    "This is exactly the kind of leadership that we need right now and I am proud to support it",
    "Thank you for fighting for working families like mine, we are with you all the way to November",
    "So proud to be part of this movement and I will be bringing my whole family to vote with me",
    "Great message and great energy, this is why I am volunteering every weekend until the election",
    "You have my full support and I hope everyone in my town shows up for you on election day",
]
AGREE_AGAINST = [
    "This is the worst plan I have heard all year and everyone can see what a disaster it would be",
    "What a fraud, these promises are fake and the people who believe them are going to be let down",
    "Corrupt from top to bottom and the lies keep coming every single day from this whole campaign",
]
SPLIT = [
    "I do not think this is going to work out the way that you say it will for the rest of us",
    "Not sure about any of this and I have never seen a single promise like this kept in my life",
    "You have to do better than this because we are not going to accept more of the same old talk",
]

SHORT = "Nope, not happening."
SPANISH = "Esta es una propuesta muy buena para las familias de nuestro país y para todos los trabajadores"

posts, comments = [], []
day = 1
for i, (author, text) in enumerate(POSTS):
    pid = f"p{i:02d}"
    n_images = 2 if i >= 10 else 1
    media = [{"kind": "IMAGE", "uri": f"images/{pid}_{k}.jpg"} for k in range(n_images)]
    posts.append({"id": pid, "author": author, "text": text + f" https://t.co/x{i}", "media": media,
                  "created_at": f"2024-09-{day:02d}T12:00:00Z"})
    day += 1
    n_comments = 3 if i < 10 else [3, 2, 3, 2][i - 10]
    for j in range(n_comments):
        pool = rng.choice([AGREE_FAVOR, AGREE_FAVOR, AGREE_AGAINST, SPLIT])
        comments.append({"id": f"{pid}c{j}", "parent_post_id": pid, "text": "@user " + rng.choice(pool)})
    comments.append({"id": f"{pid}short", "parent_post_id": pid, "text": SHORT})
    if i % 5 == 0:
        comments.append({"id": f"{pid}es", "parent_post_id": pid, "text": SPANISH})

# rejected posts, each with one comment that is rejected with them
posts.append({"id": "r_es", "author": "HARRIS", "text": SPANISH, "media": [{"kind": "IMAGE", "uri": "images/r_es.jpg"}],
              "created_at": "2024-09-20T12:00:00Z"})
posts.append({"id": "r_nomedia", "author": "TRUMP", "text": POSTS[6][1], "media": [], "created_at": "2024-09-21T12:00:00Z"})
posts.append({"id": "r_video", "author": "TRUMP", "text": POSTS[7][1],
              "media": [{"kind": "VIDEO", "uri": "videos/r_video.mp4"}], "created_at": "2024-09-22T12:00:00Z"})
for pid in ["r_es", "r_nomedia", "r_video"]:
    comments.append({"id": f"{pid}c0", "parent_post_id": pid, "text": AGREE_FAVOR[0]})

with open("posts.jsonl", "w") as f:
    for p in posts:
        f.write(json.dumps(p) + "\n")
with open("comments.jsonl", "w") as f:
    for c in comments:
        f.write(json.dumps(c) + "\n")
