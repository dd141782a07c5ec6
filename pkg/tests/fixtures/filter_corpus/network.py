def fetch_url(url):
    return urllib.request.urlopen(url).read()


def http_get(url):
    return requests.get(url).text
